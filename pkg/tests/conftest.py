import time

import pytest
from hypothesis import HealthCheck, settings

from pbp.ablation import evaluate_scenes
from pbp.model import VARIANTS
from pbp.scenario_gen import GenConfig, generate, split
from pbp.trainer import TrainConfig, prepare_dataset, train

settings.register_profile("pbp", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pbp")

CORPUS_SEED = 11
TRAIN_SEED = 7

_ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def record():
    """``record(n, ok, detail)`` stores one acceptance line for the end-of-run summary."""
    def _record(n, ok, detail=""):
        _ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _record


@pytest.fixture(scope="session")
def corpus():
    """500 mixed-layout scenes, a fifth of them path-free, split 400 / 100."""
    scenes = generate(GenConfig(seed=CORPUS_SEED, layout="mixed", n_scenes=500, path_free_fraction=0.2))
    train_scenes, val_scenes = split(scenes, 0.8, CORPUS_SEED)
    return scenes, train_scenes, val_scenes


@pytest.fixture(scope="session")
def trained(corpus):
    """Every decoder trained with the default schedule on the same samples.

    Maps decoder -> dict(params, history, report, preds, seconds).
    """
    _, train_scenes, val_scenes = corpus
    samples, _ = prepare_dataset(train_scenes)
    cfg = TrainConfig(seed=TRAIN_SEED)
    out = {}
    for decoder in VARIANTS:
        t0 = time.perf_counter()
        params, history = train(samples, cfg, decoder)
        seconds = time.perf_counter() - t0
        report, preds = evaluate_scenes(params, val_scenes)
        out[decoder] = dict(params=params, history=history, report=report, preds=preds, seconds=seconds)
    return out
