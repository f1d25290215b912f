"""Toy-scale study of interference between a feature-space loss and a
pixel loss.

A tiny network is fitted to targets it generated itself, so a zero-residual
optimum is known. The module can

* locate points where the summed (joint) loss is stationary although
  neither of its two terms is,
* step a joint schedule and an alternating schedule (feature loss on the
  heavy subset, pixel loss on everything, 10:1 learning rates) from any
  start, and
* classify a parameter vector into the four convergence patterns of the
  alternating scheme.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .autograd import ParamSet, Tensor, conv2d, mean, square, tanh
from .seeding import rng_for

SIZE = 4
N_ALL = 16
N_HEAVY = 4
HIDDEN = 2
HEAVY_SCALE = 1.0
LIGHT_SCALE = 0.1
TOY_LAMBDA = 100.0

CLASS_A = "A"  # both subsets at stationary points
CLASS_B = "B"  # heavy residual zero, all-set stationary
CLASS_C = "C"  # all-set residual zero, heavy stationary
CLASS_D = "D"  # both residuals zero
UNCLASSIFIED = "unclassified"


def _model_params(rng: np.random.Generator | None = None) -> ParamSet:
    ps = ParamSet()
    shapes = {"conv1.w": (HIDDEN, 1, 3, 3), "conv1.b": (HIDDEN,),
              "conv2.w": (1, HIDDEN, 3, 3), "conv2.b": (1,)}
    for name, shape in shapes.items():
        ps.add(name, np.zeros(shape) if rng is None else rng.normal(0, 0.5, shape))
    return ps


@dataclass
class ToyInstance:
    seed: int
    inputs: np.ndarray          # (N_ALL, 1, 4, 4)
    targets: np.ndarray         # model output at theta_star
    heavy_idx: np.ndarray
    perturbation: np.ndarray    # per-item perturbation magnitude
    theta_star: np.ndarray
    phi_w: np.ndarray           # fixed feature-map kernel (2, 1, 3, 3)
    phi_b: np.ndarray
    lam: float = TOY_LAMBDA
    params: ParamSet = field(default_factory=_model_params, repr=False)

    @property
    def n_params(self) -> int:
        return self.params.num_params()

    # -- parameter vector plumbing
    def set_theta(self, theta: np.ndarray):
        offset = 0
        for t in self.params.values():
            n = t.data.size
            t.data[...] = np.asarray(theta[offset:offset + n]).reshape(t.data.shape)
            offset += n

    def _grad_vector(self) -> np.ndarray:
        return np.concatenate([t.grad.ravel() for t in self.params.values()])

    # -- model and losses
    def forward(self, inputs: np.ndarray) -> Tensor:
        p = self.params
        h = tanh(conv2d(Tensor(inputs), p["conv1.w"], p["conv1.b"], pad=1))
        return conv2d(h, p["conv2.w"], p["conv2.b"], pad=1)

    def features(self, x) -> Tensor:
        return tanh(conv2d(x if isinstance(x, Tensor) else Tensor(x),
                           Tensor(self.phi_w), Tensor(self.phi_b), pad=1))

    def content_term(self) -> Tensor:
        h = self.heavy_idx
        return mean(square(self.features(self.forward(self.inputs[h])) - self.features(self.targets[h])))

    def mse_term(self) -> Tensor:
        return mean(square(self.forward(self.inputs) - Tensor(self.targets)))

    def joint(self) -> Tensor:
        return self.content_term() + self.lam * self.mse_term()

    def value_and_grad(self, theta: np.ndarray, which: str) -> tuple[float, np.ndarray]:
        """``which`` is one of content, mse, joint, mse_all_weighted."""
        self.set_theta(theta)
        self.params.zero_grad()
        if which == "content":
            loss = self.content_term()
        elif which == "mse":
            loss = self.mse_term()
        elif which == "weighted_mse":
            loss = self.lam * self.mse_term()
        elif which == "joint":
            loss = self.joint()
        else:
            raise ValueError(f"unknown loss {which!r}")
        loss.backward()
        return loss.item(), self._grad_vector()

    def grad(self, theta, which: str) -> np.ndarray:
        return self.value_and_grad(theta, which)[1]

    def residuals(self, theta) -> tuple[float, float]:
        """RMS output residual on the all-set and the heavy subset."""
        self.set_theta(theta)
        diff = self.forward(self.inputs).data - self.targets
        return (float(np.sqrt(np.mean(diff ** 2))),
                float(np.sqrt(np.mean(diff[self.heavy_idx] ** 2))))


def build_toy_instance(seed: int, lam: float = TOY_LAMBDA) -> ToyInstance:
    """Planted instance: targets are the model's own outputs at theta_star.

    The first ``N_HEAVY`` items carry perturbations of scale 1.0, the rest
    0.1, so the heavy subset is drawn from a visibly different distribution.
    """
    rng = rng_for(seed, "toy")
    clean = rng.uniform(0, 1, (N_ALL, 1, SIZE, SIZE))
    scale = np.where(np.arange(N_ALL) < N_HEAVY, HEAVY_SCALE, LIGHT_SCALE)
    noise = rng.normal(0, 1, clean.shape) * scale[:, None, None, None]
    inputs = clean + noise
    perturbation = np.abs(noise).mean(axis=(1, 2, 3))
    star = _model_params(rng)
    theta_star = star.flat()
    phi_w = rng.normal(0, 1.0, (2, 1, 3, 3))
    phi_b = rng.normal(0, 0.1, (2,))
    inst = ToyInstance(seed, inputs, np.zeros((N_ALL, 1, SIZE, SIZE)), np.arange(N_HEAVY),
                       perturbation, theta_star, phi_w, phi_b, lam)
    inst.set_theta(theta_star)
    inst.targets = inst.forward(inputs).data.copy()
    return inst


# --- interference search -----------------------------------------------------------

@dataclass
class Certificate:
    theta: np.ndarray
    joint_grad_norm: float
    content_grad_norm: float
    mse_grad_norm: float          # gradient norm of the lambda-weighted pixel term
    residual_all: float
    residual_heavy: float
    restart: int

    def holds(self, grad_tol: float = 1e-6, floor: float = 1e-2) -> bool:
        return (self.joint_grad_norm <= grad_tol and self.content_grad_norm >= floor
                and self.mse_grad_norm >= floor)

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "joint_grad_norm": self.joint_grad_norm,
                "content_grad_norm": self.content_grad_norm, "mse_grad_norm": self.mse_grad_norm,
                "residual_all": self.residual_all, "residual_heavy": self.residual_heavy,
                "restart": self.restart}


def certify(inst: ToyInstance, theta: np.ndarray, restart: int = -1) -> Certificate:
    """Evaluate every certificate quantity directly at ``theta``."""
    gj = inst.grad(theta, "joint")
    gc = inst.grad(theta, "content")
    gm = inst.grad(theta, "weighted_mse")
    ra, rh = inst.residuals(theta)
    return Certificate(np.array(theta, dtype=np.float64), float(np.linalg.norm(gj)),
                       float(np.linalg.norm(gc)), float(np.linalg.norm(gm)), ra, rh, restart)


def _polish(inst: ToyInstance, theta: np.ndarray, max_nfev: int) -> np.ndarray:
    """Levenberg-Marquardt on the joint gradient, i.e. descent on |grad J|^2."""
    def hess(th, h=1e-6):
        cols = []
        for i in range(len(th)):
            e = np.zeros_like(th)
            e[i] = h
            cols.append((inst.grad(th + e, "joint") - inst.grad(th - e, "joint")) / (2 * h))
        return np.array(cols).T

    res = least_squares(lambda th: inst.grad(th, "joint"), theta, jac=hess, method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return res.x


@dataclass
class SearchResult:
    found: bool
    certificate: Certificate | None
    candidates: list[Certificate]


def find_interference_stationary(inst: ToyInstance, seed: int = 0, restarts: int = 64,
                                 steps: int = 5000, grad_tol: float = 1e-6, floor: float = 1e-2,
                                 stop_after_found: int | None = None) -> SearchResult:
    """Multi-start search for a joint-stationary, component-non-stationary point.

    Each restart descends the joint loss (L-BFGS, at most ``steps``
    iterations) and then drives the joint gradient to zero with
    Levenberg-Marquardt. Among certified points the one with the smallest
    joint-gradient norm wins, ties going to the lower restart index.
    ``stop_after_found`` ends the sweep early once that many restarts
    have been certified.
    """
    candidates = []
    for r in range(restarts):
        theta0 = _model_params(rng_for(seed, "restart", r)).flat()
        res = minimize(lambda th: inst.value_and_grad(th, "joint"), theta0, jac=True,
                       method="L-BFGS-B", options={"maxiter": steps, "gtol": 1e-9, "ftol": 1e-15})
        # endpoints already at the planted optimum, or with a vanishing
        # feature-loss gradient, cannot be certified; skip the polish
        pre = certify(inst, res.x, r)
        if pre.residual_all <= 1e-9 or pre.content_grad_norm < floor / 2:
            continue
        cert = certify(inst, _polish(inst, res.x, max_nfev=50), r)
        if cert.holds(grad_tol, floor) and cert.residual_all > 0 and cert.residual_heavy > 0:
            candidates.append(cert)
            if stop_after_found is not None and len(candidates) >= stop_after_found:
                break
    if not candidates:
        return SearchResult(False, None, [])
    best = min(candidates, key=lambda c: (c.joint_grad_norm, c.restart))
    return SearchResult(True, best, candidates)


# --- schedules and classification ---------------------------------------------------

@dataclass
class Trajectory:
    schedule: str
    thetas: np.ndarray           # (steps + 1, n_params), start included
    losses: list[dict]
    final_class: str

    @property
    def displacement(self) -> np.ndarray:
        """Distance from the start after each step."""
        return np.linalg.norm(self.thetas - self.thetas[0], axis=1)


def run_schedule(inst: ToyInstance, schedule: str, init: np.ndarray, steps: int,
                 lr: float = 0.1, cycles: int = 5, lr_ratio: float = 10.0,
                 joint_lr: float | None = None) -> Trajectory:
    """Plain gradient descent under one of two schedules.

    ``alternating``: ``cycles`` steps on the heavy-subset content loss at
    ``lr``, then one step on the all-set pixel loss at ``lr / lr_ratio``,
    repeated.
    ``joint``: every step descends content + lambda * mse at ``joint_lr``,
    by default ``lr / (lr_ratio * lambda)`` so the weighted pixel term moves
    at the same rate as in the alternating schedule.
    """
    if joint_lr is None:
        joint_lr = lr / (lr_ratio * max(inst.lam, 1.0))
    if schedule not in ("joint", "alternating"):
        raise ValueError(f"unknown schedule {schedule!r}")
    theta = np.array(init, dtype=np.float64)
    thetas = [theta.copy()]
    losses = []
    for k in range(steps):
        if schedule == "joint":
            which, step_lr = "joint", joint_lr
        elif k % (cycles + 1) < cycles:
            which, step_lr = "content", lr
        else:
            which, step_lr = "mse", lr / lr_ratio
        value, g = inst.value_and_grad(theta, which)
        theta = theta - step_lr * g
        thetas.append(theta.copy())
        losses.append({"step": k, "loss": which, "value": value})
    return Trajectory(schedule, np.array(thetas), losses, classify_solution(inst, theta))


def classify_solution(inst: ToyInstance, theta: np.ndarray, grad_tol: float = 1e-6,
                      resid_tol: float = 1e-6) -> str:
    """Map ``theta`` to one of the four convergence patterns.

    All-set stationarity is judged on the pixel loss (the CNN side) and
    heavy-set stationarity on the feature loss (the GAN side).
    """
    stat_all = np.linalg.norm(inst.grad(theta, "mse")) <= grad_tol
    stat_heavy = np.linalg.norm(inst.grad(theta, "content")) <= grad_tol
    resid_all, resid_heavy = inst.residuals(theta)
    zero_all, zero_heavy = resid_all <= resid_tol, resid_heavy <= resid_tol
    if zero_all and zero_heavy:
        return CLASS_D
    if zero_heavy and stat_all:
        return CLASS_B
    if zero_all and stat_heavy:
        return CLASS_C
    if stat_all and stat_heavy:
        return CLASS_A
    return UNCLASSIFIED


def _downsample(values: np.ndarray, keep: int = 20) -> list:
    idx = np.unique(np.linspace(0, len(values) - 1, min(keep, len(values))).round().astype(int))
    return [[int(i), float(values[i])] for i in idx]


def analyze(seed: int = 0, n_instances: int = 3, restarts: int = 64, steps: int = 5000,
            schedule_steps: int = 100, stop_after_found: int | None = None) -> dict:
    """Full demonstration over ``n_instances`` seeded toys; JSON-ready dict."""
    out = {"seed": seed, "instances": []}
    for i in range(n_instances):
        inst = build_toy_instance(seed * 1000 + i)
        entry = {"instance_seed": inst.seed, "n_params": inst.n_params,
                 "theta_star_class": classify_solution(inst, inst.theta_star)}
        search = find_interference_stationary(inst, seed=seed * 1000 + i, restarts=restarts, steps=steps,
                                              stop_after_found=stop_after_found)
        entry["found"] = search.found
        entry["n_candidates"] = len(search.candidates)
        if search.found:
            cert = search.certificate
            entry["certificate"] = cert.to_dict()
            entry["certificate_class"] = classify_solution(inst, cert.theta)
            for sched in ("joint", "alternating"):
                traj = run_schedule(inst, sched, cert.theta, schedule_steps)
                entry[sched] = {"displacement": _downsample(traj.displacement),
                                "max_displacement": float(traj.displacement.max()),
                                "final_class": traj.final_class}
        out["instances"].append(entry)
    return out


def analysis_json(report: dict) -> str:
    def default(o):
        if isinstance(o, float) and math.isinf(o):
            return "inf"
        raise TypeError(type(o))
    return json.dumps(report, indent=2, sort_keys=True, default=default) + "\n"
