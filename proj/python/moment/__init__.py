# Copyright 2026 The MoMent Authors.
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

"""Python access to the MoMent C++ core."""

import json

from . import _moment
from ._moment import auc, average_precision, grad_check, kde, mi_chain, mi_check, overlap_coefficient, spearman

__all__ = [
    "auc",
    "average_precision",
    "effective_config",
    "generate_synth",
    "grad_check",
    "kde",
    "mi_chain",
    "mi_check",
    "overlap_coefficient",
    "spearman",
    "train",
]


def _dump(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def effective_config(config=None):
    """Validated configuration with every default filled in."""
    return json.loads(_moment.effective_config(_dump(config)))


def generate_synth(out_dir, config=None):
    return _moment.generate_synth(_dump(config), str(out_dir))


def train(data_dir, out_dir, config=None):
    """Trains on a dataset directory; writes model.bin and history.csv."""
    return _moment.train(_dump(config), str(data_dir), str(out_dir))
