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
"""
Long-format CSV ingestion: one observation per row, grouped by subject.
"""

import numpy as np
import pandas as pd

from stlmm.common.exceptions import DataError
from stlmm.model.data import LongDataset, SubjectBlock

INTERCEPT = '1'


def parse_columns(value):
    """'1,x' or ['1', 'x'] -> ['1', 'x']."""
    if value is None:
        return None
    if isinstance(value, str):
        return [c.strip() for c in value.split(',') if c.strip()]
    return [str(c) for c in value]


def _numeric_column(frame, column):
    cells = frame[column].str.strip()
    missing = cells == ''
    if missing.any():
        row = int(np.argmax(missing.to_numpy())) + 2
        raise DataError('missing value in column {} at row {}'.format(column, row),
                        row=row, column=column)
    values = pd.to_numeric(cells, errors='coerce')
    bad = values.isna()
    if bad.any():
        i = int(np.argmax(bad.to_numpy()))
        raise DataError('non-numeric value {!r} in column {} at row {}'.format(
            cells.iloc[i], column, i + 2), row=i + 2, column=column)
    values = values.to_numpy(dtype=float)
    infinite = ~np.isfinite(values)
    if infinite.any():
        i = int(np.argmax(infinite))
        raise DataError('non-finite value {!r} in column {} at row {}'.format(
            cells.iloc[i], column, i + 2), row=i + 2, column=column)
    return values


def _subject_keys(ids):
    """Integer ids when every id is written as a plain integer, the raw strings otherwise."""
    try:
        keys = [int(v) for v in ids]
    except ValueError:
        return list(ids)
    if any(str(k) != v for k, v in zip(keys, ids)):
        return list(ids)
    return keys


def _design(columns, values, rows):
    return np.column_stack([np.ones(len(rows)) if c == INTERCEPT else values[c][rows]
                            for c in columns])


def ingest_long_csv(path, response, fixed, random, subject):
    """
    Build a LongDataset from a CSV with a header row.

    :param response: response column
    :param fixed: columns of X; '1' is the intercept
    :param random: columns of Z; '1' is the intercept
    :param subject: subject id column
    :rtype: stlmm.model.data.LongDataset
    """
    fixed = parse_columns(fixed)
    random = parse_columns(random)
    if not fixed or not random:
        raise DataError('fixed and random column lists must not be empty')
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (IOError, OSError) as e:
        raise DataError('cannot read {}: {}'.format(path, e))
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError('cannot parse {}: {}'.format(path, e))

    used = [response] + [c for c in fixed + random if c != INTERCEPT]
    for column in [subject] + used:
        if column not in frame.columns:
            raise DataError('unknown column {}'.format(column), column=column)
    if frame.shape[0] == 0:
        raise DataError('{} has no data rows'.format(path))

    ids = frame[subject].str.strip()
    if (ids == '').any():
        row = int(np.argmax((ids == '').to_numpy())) + 2
        raise DataError('missing value in column {} at row {}'.format(subject, row),
                        row=row, column=subject)
    values = {c: _numeric_column(frame, c) for c in sorted(set(used))}

    groups = {}
    order = []
    for i, key in enumerate(ids):
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(i)

    blocks = []
    for key, subject_id in zip(order, _subject_keys(order)):
        rows = np.array(groups[key])
        blocks.append(SubjectBlock(subject_id, values[response][rows],
                                   _design(fixed, values, rows), _design(random, values, rows)))
    return LongDataset(blocks, response=response, fixed=fixed, random=random, subject=subject)
