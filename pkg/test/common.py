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

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function

import contextlib
import os
import shutil
import tempfile

import pytest

from stlmm.sim.scenarios import generate_dataset, get_scenario

DATA_DIR = os.path.join(os.path.dirname(__file__), 'data')

slow = pytest.mark.skipif(os.environ.get('STLMM_SLOW_TESTS') != '1',
                          reason='set STLMM_SLOW_TESTS=1 to run full fits')


def data_path(name):
    return os.path.join(DATA_DIR, name)


def simulated(name='illus-a', subjects=40, seed=1):
    """A simulated data set and its generating Theta."""
    return generate_dataset(get_scenario(name, subjects), seed)


@contextlib.contextmanager
def tempdir():
    dirpath = tempfile.mkdtemp()
    try:
        yield dirpath
    finally:
        shutil.rmtree(dirpath)


@contextlib.contextmanager
def temppath():
    path = tempfile.mktemp()
    try:
        yield path
    finally:
        if os.path.exists(path):
            if os.path.isdir(path):
                shutil.rmtree(path)
            else:
                os.remove(path)
