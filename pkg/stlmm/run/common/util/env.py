# Copyright 2026 The stlmm Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

import logging
import os

import psutil

STLMM_THREADS = 'STLMM_THREADS'
STLMM_SEED = 'STLMM_SEED'
STLMM_LOG_LEVEL = 'STLMM_LOG_LEVEL'

TRACE = 5
_LEVELS = {
    'TRACE': TRACE,
    'DEBUG': logging.DEBUG,
    'INFO': logging.INFO,
    'WARNING': logging.WARNING,
    'ERROR': logging.ERROR,
    'FATAL': logging.CRITICAL,
}


def _int_from_env(name):
    value = os.environ.get(name)
    if value is None or value.strip() == '':
        return None
    try:
        return int(value)
    except ValueError:
        raise ValueError('{}={} must be an integer'.format(name, value))


def get_threads():
    """STLMM_THREADS, else the CPU count."""
    threads = _int_from_env(STLMM_THREADS)
    if threads is not None:
        if threads < 1:
            raise ValueError('{}={} must be >= 1'.format(STLMM_THREADS, threads))
        return threads
    return psutil.cpu_count() or 1


def get_seed():
    """STLMM_SEED, or None if unset."""
    return _int_from_env(STLMM_SEED)


def get_log_level(default='WARNING'):
    return os.environ.get(STLMM_LOG_LEVEL, default).upper()


def log_level_value(name):
    if name not in _LEVELS:
        raise ValueError('unknown log level {}; expected one of {}'.format(name, ', '.join(_LEVELS)))
    return _LEVELS[name]
