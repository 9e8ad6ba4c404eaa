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
from __future__ import print_function

import textwrap

from setuptools import setup, find_packages

from stlmm import __version__


require_list = ['cloudpickle', 'psutil', 'pyyaml', 'six',
                'numpy>=1.17', 'scipy>=1.6', 'pandas>=1.5', 'numdifftools>=0.9.39']

test_require_list = ['pytest', 'mock']

setup(name='stlmm',
      version=__version__,
      packages=find_packages(exclude=['test', 'test.*']),
      description='Skew-t linear mixed models fitted by ECME.',
      author='The stlmm Authors',
      long_description=textwrap.dedent('''\
          stlmm fits linear mixed models whose random effects follow the canonical fundamental
          skew-t distribution, with standard errors, AIC model selection and a simulation harness.'''),
      classifiers=[
          'License :: OSI Approved :: Apache Software License'
      ],
      install_requires=require_list,
      extras_require={'test': test_require_list},
      tests_require=test_require_list,
      python_requires='>=3.6',
      zip_safe=False,
      scripts=['bin/stlmm'])
