"""Shared test helpers and the acceptance-criterion result registry."""

from __future__ import annotations

import numpy as np

from bivsel import ColumnKind, DataMatrix, RngHandle

# one (number, line) entry per acceptance criterion; echoed in the summary
CRITERION_LINES: list[tuple[int, str]] = []


def record_criterion(num: int, ok: bool, detail: str) -> str:
    line = f"CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    CRITERION_LINES.append((num, line))
    print(line, flush=True)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-np.asarray(v, dtype=float)))


def toy_logistic(
    n: int = 400,
    k_signal: int = 3,
    k_noise: int = 7,
    seed: int = 0,
    beta: float = 2.0,
) -> DataMatrix:
    """Balanced logistic outcome driven linearly by the first k_signal columns."""
    gen = RngHandle(seed).generator()
    k = k_signal + k_noise
    X = gen.normal(size=(n, k))
    logit = X[:, :k_signal] @ np.full(k_signal, beta)
    y = (gen.random(n) < sigmoid(logit)).astype(float)
    return DataMatrix(
        names=tuple(f"v{i}" for i in range(1, k + 1)),
        kinds=(ColumnKind.CONTINUOUS,) * k,
        x=X,
        y=y,
    )


def pure_noise(n: int = 300, k: int = 10, rate: float = 0.5, seed: int = 0) -> DataMatrix:
    """Continuous predictors carrying no information about the outcome."""
    gen = RngHandle(seed).generator()
    X = gen.normal(size=(n, k))
    y = (gen.random(n) < rate).astype(float)
    return DataMatrix(
        names=tuple(f"v{i}" for i in range(1, k + 1)),
        kinds=(ColumnKind.CONTINUOUS,) * k,
        x=X,
        y=y,
    )
