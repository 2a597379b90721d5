"""Damped least squares with analytic Jacobians.

A compact Levenberg loop: the normal equations are regularized with
``lam * diag(J^T J)`` so steps stay sane across wildly different
parameter scales, ``lam`` shrinks by 0.3 on every accepted step and
doubles on every rejection, and the loop stops when the relative cost
improvement of an accepted step, or the predicted improvement of a
rejected one, falls below ``cost_tol``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericsError

_LAM_MAX = 1e12


@dataclass
class LMResult:
    params: np.ndarray
    cov_unit: np.ndarray        # pinv(J^T J) at the solution, unscaled
    cost: float                 # sum of squared (weighted) residuals
    n_points: int
    iterations: int
    converged: bool
    rank_deficient: bool


def levenberg(residual_jac: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
              p0, max_iter: int = 200, cost_tol: float = 1e-10,
              lam0: float = 1e-3, reflect: Callable[[np.ndarray], np.ndarray] | None = None,
              ) -> LMResult:
    """Minimize ||r(p)||^2 given a joint residual/Jacobian callback.

    ``reflect`` maps a trial vector back into the model's domain (e.g.
    absolute value for parameters that only enter through even powers);
    it must be an exact symmetry of the residual.
    """
    p = np.asarray(p0, dtype=float).copy()
    if reflect is not None:
        p = reflect(p)
    r, jac = residual_jac(p)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise NumericsError("initial guess gives non-finite residuals")

    lam = lam0
    iterations = 0
    converged = cost == 0.0
    rank_deficient = False

    while not converged and iterations < max_iter:
        iterations += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        floor = np.max(diag) * 1e-14
        if floor == 0.0:
            rank_deficient = True
            break
        if np.any(diag < floor):
            rank_deficient = True
            diag = np.maximum(diag, floor)
        try:
            step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
        except np.linalg.LinAlgError:
            rank_deficient = True
            step = np.linalg.lstsq(jtj + lam * np.diag(diag), -grad, rcond=None)[0]

        trial = p + step
        if reflect is not None:
            trial = reflect(trial)
        r_try, jac_try = residual_jac(trial)
        cost_try = float(r_try @ r_try)

        if np.isfinite(cost_try) and cost_try < cost:
            improvement = cost - cost_try
            p, r, jac, cost = trial, r_try, jac_try, cost_try
            lam = max(lam * 0.3, 1e-15)
            if improvement <= cost_tol * max(cost, 1e-300):
                converged = True
        else:
            # On a rejection, check the quadratic model: if even the
            # predicted decrease is below the floor we are at a minimum
            # (typical for noiseless data, where cost -> 0 exactly).
            predicted = 2.0 * step @ grad + step @ (jtj @ step)
            if -predicted <= cost_tol * max(cost, 1e-300):
                converged = True
            else:
                lam *= 2.0
                if lam > _LAM_MAX:
                    break

    # Rank check at the solution too: a perfect initial guess never enters
    # the loop, but a parameter with an all-zero column is still unresolved.
    jtj = jac.T @ jac
    diag = np.diag(jtj)
    top = float(np.max(diag)) if diag.size else 0.0
    if top == 0.0 or np.any(diag < top * 1e-14):
        rank_deficient = True

    cov_unit = np.linalg.pinv(jtj)
    return LMResult(params=p, cov_unit=cov_unit, cost=cost, n_points=r.size,
                    iterations=iterations, converged=converged,
                    rank_deficient=rank_deficient)
