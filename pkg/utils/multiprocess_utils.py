import os
import traceback
from multiprocessing import Queue, Process


class WorkerError(Exception):
    pass


def chunked_worker(worker_id, map_func, args, results_queue=None, init_ctx_func=None):
    ctx = init_ctx_func(worker_id) if init_ctx_func is not None else None
    for job_idx, arg in args:
        try:
            if ctx is not None:
                res = map_func(*arg, ctx=ctx)
            else:
                res = map_func(*arg)
            results_queue.put((job_idx, res, None))
        except BaseException as e:
            results_queue.put((job_idx, None, (e, traceback.format_exc())))


def chunked_multiprocess_run(map_func, args, num_workers=None, ordered=True, init_ctx_func=None, q_max_size=1000):
    """
        Run ``map_func(*arg)`` for every ``arg`` in ``args`` over ``num_workers`` processes.
        Results are yielded in job order when ``ordered``; an exception raised by a job is
        re-raised in the parent with the worker traceback attached.
        ``num_workers <= 1`` runs in-process.
    """
    args = list(zip(range(len(args)), args))
    n_jobs = len(args)
    if num_workers is None:
        num_workers = int(os.getenv('N_PROC', os.cpu_count()))
    num_workers = max(1, min(num_workers, n_jobs))
    if num_workers == 1:
        for _, arg in args:
            yield map_func(*arg) if init_ctx_func is None else map_func(*arg, ctx=init_ctx_func(0))
        return
    results_queues = []
    if ordered:
        for i in range(num_workers):
            results_queues.append(Queue(maxsize=max(1, q_max_size // num_workers)))
    else:
        results_queue = Queue(maxsize=q_max_size)
        for i in range(num_workers):
            results_queues.append(results_queue)
    workers = []
    for i in range(num_workers):
        args_worker = args[i::num_workers]
        p = Process(target=chunked_worker, args=(
            i, map_func, args_worker, results_queues[i], init_ctx_func), daemon=True)
        workers.append(p)
        p.start()
    try:
        for n_finished in range(n_jobs):
            results_queue = results_queues[n_finished % num_workers]
            job_idx, res, failure = results_queue.get()
            assert job_idx == n_finished or not ordered, (job_idx, n_finished)
            if failure is not None:
                exc, tb = failure
                raise exc from WorkerError(f'job {job_idx} failed in a worker:\n{tb}')
            yield res
    finally:
        for w in workers:
            w.join(timeout=1)
            if w.is_alive():
                w.terminate()
                w.join()
            w.close()
