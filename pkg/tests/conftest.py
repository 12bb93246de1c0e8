import numpy as np
import pytest

from coalesce.autodiff import Tensor


def numeric_grad(fn, x: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of a scalar function of one array."""
    g = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = float(fn(x))
        flat[i] = old - eps
        down = float(fn(x))
        flat[i] = old
        g.reshape(-1)[i] = (up - down) / (2 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_grads(build, arrays, dtype, eps=1e-6):
    """Largest relative error between backprop at ``dtype`` and central differences.

    ``build`` maps a list of Tensors to a scalar Tensor. The difference
    quotients are always taken in float64 at the same (rounded) inputs; in
    float32 they would be dominated by rounding of the forward value.
    """
    arrays = [np.array(a, dtype=dtype) for a in arrays]
    ts = [Tensor(a, requires_grad=True, dtype=dtype) for a in arrays]
    build(ts).backward()
    wide = [a.astype(np.float64) for a in arrays]
    worst = 0.0
    for k, a in enumerate(wide):
        def f(v, k=k):
            args = [Tensor(b if j != k else v, dtype=np.float64) for j, b in enumerate(wide)]
            return build(args).data
        num = numeric_grad(f, a, eps)
        worst = max(worst, rel_error(ts[k].grad, num))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and outcome == "passed":
                continue
            name = nodeid.split("::")[-1][len("test_criterion_"):]
            lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            num, _, title = name.partition("_")
            terminalreporter.write_line(f"criterion {int(num):2d} {status}  {title.replace('_', ' ')}")
