import numpy as np
import pytest
import torch

torch.set_num_threads(1)


def finite_difference_errors(params, loss_fn, n_samples=200, eps=1e-6, seed=0):
    """Relative errors between autograd and central differences at random parameter entries.

    ``loss_fn()`` must return a float64 scalar. The relative error floor of 1e-6 keeps
    near-zero gradients from dividing by round-off.
    """
    params = [p for p in params if p.requires_grad]
    for p in params:
        p.grad = None
    loss_fn().backward()
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat = rng.choice(sizes.sum(), size=min(n_samples, sizes.sum()), replace=False)
    bounds = np.cumsum(sizes)
    errors = []
    with torch.no_grad():
        for k in flat:
            i = int(np.searchsorted(bounds, k, side="right"))
            j = int(k - (bounds[i - 1] if i else 0))
            p = params[i].view(-1)
            analytic = params[i].grad.view(-1)[j].item() if params[i].grad is not None else 0.0
            orig = p[j].item()
            p[j] = orig + eps
            up = loss_fn().item()
            p[j] = orig - eps
            down = loss_fn().item()
            p[j] = orig
            numeric = (up - down) / (2 * eps)
            errors.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
    return np.array(errors)


@pytest.fixture
def fd_errors():
    return finite_difference_errors


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
