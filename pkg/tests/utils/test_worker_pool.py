import logging

from mackrl.utils.logger import setup_logger
from mackrl.utils.worker_pool import WorkerPool, available_workers


def test_results_keep_submission_order():
    with WorkerPool(4) as pool:
        assert pool.map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
    assert pool.executor is None


def test_single_worker_runs_inline():
    pool = WorkerPool(1).start()
    assert pool.executor is None
    assert pool.map(str, [1, 2]) == ["1", "2"]


def test_available_workers_respects_the_cap(monkeypatch):
    monkeypatch.setenv("CK_MACKRL_THREADS", "1")
    assert available_workers(8) == 1
    monkeypatch.delenv("CK_MACKRL_THREADS")
    assert 1 <= available_workers(2) <= 2


def test_setup_logger_writes_the_file(tmp_path):
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    try:
        setup_logger(tmp_path / "logs" / "run.log", level="DEBUG")
        logging.getLogger("mackrl.test").debug("hello from the test")
        for handler in root.handlers:
            handler.flush()
        text = (tmp_path / "logs" / "run.log").read_text()
        assert "mackrl.test - DEBUG - hello from the test" in text
    finally:
        for handler in root.handlers[:]:
            root.removeHandler(handler)
            handler.close()
        for handler in saved[0]:
            root.addHandler(handler)
        root.setLevel(saved[1])
