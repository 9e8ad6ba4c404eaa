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


class Settings(object):

    def __init__(self, command=None, input=None, output=None, threads=1, seed=None,
                 log_level='WARNING', log_hide_timestamp=False):
        """
        :param command: subcommand being run
        :type command: string
        :param input: path of the input CSV (fit and select)
        :type input: string
        :param output: path of the main output file
        :type output: string
        :param threads: worker threads for Monte Carlo replicas
        :type threads: int
        :param seed: run seed, after STLMM_SEED is applied
        :type seed: int
        :param log_level: one of config_parser.LOG_LEVELS
        :type log_level: string
        :param log_hide_timestamp: drop timestamps from log lines
        :type log_hide_timestamp: boolean
        """
        self.command = command
        self.input = input
        self.output = output
        self.threads = threads
        self.seed = seed
        self.log_level = log_level
        self.log_hide_timestamp = log_hide_timestamp
