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

import threading

from six.moves import queue


def execute_function_multithreaded(fn,
                                   args_list,
                                   block_until_all_done=True,
                                   max_concurrent_executions=1000):
    """
    Runs fn once per entry of args_list on a bounded pool of threads.
    :param fn: function to be executed
    :type fn: callable
    :param args_list: positional arguments of each execution
    :type args_list: list(list)
    :param block_until_all_done: if True, wait for every execution and
    return the results; a worker exception is re-raised here, the one with
    the lowest index first.
    :type block_until_all_done: bool
    :param max_concurrent_executions: thread count cap
    :type max_concurrent_executions: int
    :return:
    None if block_until_all_done is False, otherwise
        {
            index: execution result of fn with args_list[index]
        }
    :rtype: dict
    """
    result_queue = queue.Queue()
    worker_queue = queue.Queue()

    for i, arg in enumerate(args_list):
        worker_queue.put((i, list(arg)))

    def fn_execute():
        while True:
            try:
                exec_index, arg = worker_queue.get(block=False)
            except queue.Empty:
                return
            try:
                result_queue.put((exec_index, fn(*arg), None))
            except Exception as e:
                result_queue.put((exec_index, None, e))

    threads = []
    number_of_threads = max(1, min(max_concurrent_executions, len(args_list)))

    for _ in range(number_of_threads):
        thread = threading.Thread(target=fn_execute)
        if not block_until_all_done:
            thread.daemon = True
        thread.start()
        threads.append(thread)

    results = None
    if block_until_all_done:

        # join() cannot be interrupted by a signal, so poll with a timeout.
        have_alive_child = True
        while have_alive_child:
            have_alive_child = False
            for t in threads:
                t.join(0.1)
                if t.is_alive():
                    have_alive_child = True

        results = {}
        errors = {}
        while not result_queue.empty():
            index, value, error = result_queue.get()
            if error is not None:
                errors[index] = error
            else:
                results[index] = value

        if errors:
            raise errors[min(errors)]
        if len(results) != len(args_list):
            raise RuntimeError(
                'Some threads for func {func} did not complete '
                'successfully.'.format(func=getattr(fn, '__name__', fn)))
    return results
