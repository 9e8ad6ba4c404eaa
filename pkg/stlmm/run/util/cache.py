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

import datetime
import errno
import logging
import os
import threading

import cloudpickle

logger = logging.getLogger(__name__)


class Cache(object):
    """
    Checkpoint store of finished work, persisted with cloudpickle.

    Entries written under a different `parameters_hash` are discarded on
    load; entries older than the staleness threshold are ignored.
    """

    def __init__(self, cache_folder, cache_staleness_threshold_in_minutes,
                 parameters_hash, file_name='checkpoint.bin'):

        self._cache_file = os.path.join(cache_folder, file_name)
        try:
            os.makedirs(cache_folder)
        except OSError as e:
            if e.errno != errno.EEXIST:
                raise

        content = {}
        if os.path.isfile(self._cache_file):
            with open(self._cache_file, 'rb') as cf:
                try:
                    content = cloudpickle.load(cf)
                except Exception:
                    logger.error('Cannot read checkpoint file %s; delete it to start over.',
                                 self._cache_file)
                    raise

        if content.get('parameters_hash', None) == parameters_hash:
            self._content = content
        else:
            self._content = {'parameters_hash': parameters_hash}

        self._cache_staleness_threshold = \
            datetime.timedelta(minutes=cache_staleness_threshold_in_minutes)
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            timestamp, val = self._content.get(key, (None, None))

        if timestamp and timestamp >= datetime.datetime.now() - self._cache_staleness_threshold:
            return val
        return None

    def put(self, key, val):
        with self._lock:
            self._content[key] = (datetime.datetime.now(), val)
            tmp = self._cache_file + '.tmp'
            with open(tmp, 'wb') as cf:
                cloudpickle.dump(self._content, cf)
            os.replace(tmp, self._cache_file)

    def keys(self):
        with self._lock:
            return [k for k in self._content if k != 'parameters_hash']


def use_cache():
    """
    Decorator: when called with a `fn_cache` keyword that is not None, the
    result for the first positional argument is looked up there first and
    stored after a successful call. None results are not stored.
    """

    def wrap(func):
        def wrap_f(*args, **kwargs):
            fn_cache = kwargs.pop('fn_cache', None)
            if fn_cache is None:
                return func(*args, **kwargs)
            key = (func.__name__, args[0])
            cached_result = fn_cache.get(key)
            if cached_result is not None:
                return cached_result
            results = func(*args, **kwargs)
            if results is not None:
                fn_cache.put(key, results)
            return results

        wrap_f.__name__ = func.__name__
        wrap_f.__doc__ = func.__doc__
        return wrap_f

    return wrap
