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


class StlmmError(Exception):
    """Base class for errors raised by stlmm."""


class ModelError(StlmmError, ValueError):
    """Parameters or dimensions that do not describe a valid model."""


class DataError(StlmmError, ValueError):
    """
    Problems with ingested data. `row` is the 1-based file line (header is
    line 1) and `column` the offending column name, when known.
    """

    def __init__(self, message, row=None, column=None):
        super(DataError, self).__init__(message)
        self.row = row
        self.column = column


class NumericalError(StlmmError, RuntimeError):
    """A numeric kernel could not produce a trustworthy value."""


class SubjectError(NumericalError):
    """A per-subject evaluation failed; carries the subject id."""

    def __init__(self, subject_id, cause):
        super(SubjectError, self).__init__(
            'subject {}: {}'.format(subject_id, cause))
        self.subject_id = subject_id
        self.cause = cause


class NonConvergenceError(NumericalError):
    """
    The fit loop hit a non-finite likelihood. `theta` holds the last
    parameter value with a finite likelihood.
    """

    def __init__(self, message, theta=None):
        super(NonConvergenceError, self).__init__(message)
        self.theta = theta
