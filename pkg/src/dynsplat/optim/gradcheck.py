"""Finite-difference verification of hand-written gradients.

Central differences on a random subset of coordinates, compared against
analytic gradients by relative error. Used in tests to validate every
backward implementation in the package against the forward code itself.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    n_checked: int
    n_passed: int
    max_rel_error: float
    median_rel_error: float
    passed: bool
    # (param name, flat index, analytic, numeric, relative error)
    failures: list = field(default_factory=list)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"grad_check {status}: {self.n_passed}/{self.n_checked} coords, "
            f"max rel err {self.max_rel_error:.3e}, "
            f"median {self.median_rel_error:.3e}"
        ]
        for name, idx, ana, num, err in self.failures[:10]:
            lines.append(
                f"  {name}[{idx}]: analytic {ana: .6e} numeric {num: .6e} "
                f"rel {err:.3e}"
            )
        return "\n".join(lines)


def grad_check(
    params: dict,
    loss_fn,
    analytic: dict,
    samples: int = 200,
    step: float = 1e-4,
    tol: float = 1e-3,
    seed: int = 0,
    pass_fraction: float = 0.99,
) -> GradCheckReport:
    """Compare analytic gradients to central finite differences.

    params: name -> array of current values (not mutated).
    loss_fn: callable taking a dict like `params` and returning a scalar;
        must be deterministic.
    analytic: name -> array of dL/dparam, same shapes as params.
    samples: number of randomly chosen coordinates across all params.

    A coordinate passes when |analytic - numeric| <= tol * max(|analytic|,
    |numeric|, 1). The report passes when at least `pass_fraction` of the
    sampled coordinates do.
    """
    rng = np.random.default_rng(seed)
    names = sorted(params)
    sizes = np.array([params[n].size for n in names])
    total = int(sizes.sum())
    n_take = min(samples, total)
    chosen = rng.choice(total, size=n_take, replace=False)
    bounds = np.cumsum(sizes)

    base = {n: np.array(params[n], dtype=float) for n in names}
    errors = []
    failures = []
    n_passed = 0
    for flat in np.sort(chosen):
        pi = int(np.searchsorted(bounds, flat, side="right"))
        name = names[pi]
        idx = int(flat - (bounds[pi - 1] if pi > 0 else 0))

        work = {n: v.copy() for n, v in base.items()}
        view = work[name].reshape(-1)
        view[idx] = base[name].reshape(-1)[idx] + step
        f_plus = float(loss_fn(work))
        view[idx] = base[name].reshape(-1)[idx] - step
        f_minus = float(loss_fn(work))
        numeric = (f_plus - f_minus) / (2.0 * step)
        ana = float(np.asarray(analytic[name]).reshape(-1)[idx])

        scale = max(abs(ana), abs(numeric), 1.0)
        rel = abs(ana - numeric) / scale
        errors.append(rel)
        if rel <= tol:
            n_passed += 1
        else:
            failures.append((name, idx, ana, numeric, rel))

    errors = np.array(errors) if errors else np.zeros(1)
    failures.sort(key=lambda f: -f[4])
    return GradCheckReport(
        n_checked=n_take,
        n_passed=n_passed,
        max_rel_error=float(errors.max()),
        median_rel_error=float(np.median(errors)),
        passed=n_passed >= pass_fraction * n_take,
        failures=failures,
    )
