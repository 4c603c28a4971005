"""Brute-force validation harness for the switching recursion.

Tiny discrete problems (a state lattice per step with explicit
transition probabilities, per-state per-regime running costs, terminal
rewards and switch costs) small enough that EVERY Markov switching
policy - a map (step, state, regime) -> {stay, switch}, one switch
opportunity per step - can be evaluated exactly. The enumeration
minimum is the ground truth the production solver must reproduce to
machine precision in exact-expectation mode.

``backward_induction`` is a second, deliberately plain (loop-and-dict,
numpy-free) dynamic program used to cross-check the enumeration itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .solver import COLLATERALIZED, REGIMES, UNCOLLATERALIZED, other_regime

MAX_STEPS = 6
MAX_STATES = 8
MAX_DECISION_BITS = 22


@dataclass
class ToyProblem:
    """Discrete switching problem; states may differ in count per step."""

    transitions: list  # len n_steps; transitions[n] is (S_n, S_{n+1}) row-stochastic
    running: dict  # regime -> list (len n_steps) of per-state cost densities
    terminal: dict  # regime -> per-state rewards at step n_steps
    switch_cost_from: dict  # regime -> non-negative cost
    dt: float = 1.0
    rate: float = 0.0
    initial_state: int = 0

    def __post_init__(self):
        self.transitions = [np.asarray(t, dtype=float) for t in self.transitions]
        self.running = {
            g: [np.asarray(v, dtype=float) for v in self.running[g]] for g in REGIMES
        }
        self.terminal = {g: np.asarray(self.terminal[g], dtype=float) for g in REGIMES}
        if not 1 <= self.n_steps <= MAX_STEPS:
            raise ValueError(f"need 1..{MAX_STEPS} steps")
        for n, t in enumerate(self.transitions):
            if t.ndim != 2 or t.shape[0] > MAX_STATES or t.shape[1] > MAX_STATES:
                raise ValueError(f"transition {n} exceeds {MAX_STATES} states")
            if np.any(t < -1e-15):
                raise ValueError(f"negative transition probability at step {n}")
            if np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-12:
                raise ValueError(f"transition rows at step {n} must sum to 1")
            if n + 1 < self.n_steps and t.shape[1] != self.transitions[n + 1].shape[0]:
                raise ValueError("transition shapes do not chain")
        for g in REGIMES:
            if len(self.running[g]) != self.n_steps:
                raise ValueError("running costs must cover every step")
            for n, v in enumerate(self.running[g]):
                if v.shape != (self.states_at(n),):
                    raise ValueError(f"running cost shape mismatch at step {n}")
                if not np.all(np.isfinite(v)):
                    raise ValueError("costs must be finite")
            if self.terminal[g].shape != (self.states_at(self.n_steps),):
                raise ValueError("terminal reward shape mismatch")
            if self.switch_cost_from[g] < 0:
                raise ValueError("switch costs must be non-negative")
        if not 0 <= self.initial_state < self.states_at(0):
            raise ValueError("initial state out of range")

    @property
    def n_steps(self) -> int:
        return len(self.transitions)

    def states_at(self, n: int) -> int:
        if n < self.n_steps:
            return self.transitions[n].shape[0]
        return self.transitions[-1].shape[1]

    @property
    def n_decision_bits(self) -> int:
        return 2 * sum(self.states_at(n) for n in range(self.n_steps))

    def to_dict(self) -> dict:
        return {
            "transitions": [t.tolist() for t in self.transitions],
            "running": {g: [v.tolist() for v in self.running[g]] for g in REGIMES},
            "terminal": {g: self.terminal[g].tolist() for g in REGIMES},
            "switch_cost_from": dict(self.switch_cost_from),
            "dt": self.dt,
            "rate": self.rate,
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyProblem":
        return cls(
            transitions=d["transitions"],
            running=d["running"],
            terminal=d["terminal"],
            switch_cost_from=d["switch_cost_from"],
            dt=d.get("dt", 1.0),
            rate=d.get("rate", 0.0),
            initial_state=d.get("initial_state", 0),
        )


def save_toy_problem(problem: ToyProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem.to_dict(), fh, indent=1)


def load_toy_problem(path) -> ToyProblem:
    with open(path) as fh:
        return ToyProblem.from_dict(json.load(fh))


def _bit_index(problem: ToyProblem):
    """(step, state, regime_index) -> bit position, regimes in REGIMES order."""
    idx = {}
    pos = 0
    for n in range(problem.n_steps):
        for s in range(problem.states_at(n)):
            for gi in range(2):
                idx[(n, s, gi)] = pos
                pos += 1
    return idx


def enumerate_policies(problem: ToyProblem, initial_regime: str):
    """Exact expected cost of every Markov switching policy.

    Returns (optimal value, optimal policy) with the policy a dict
    {(step, state, regime): switch?}. Evaluation pushes the joint
    (state, regime) distribution forward for all 2^D policies at once.
    """
    d_bits = problem.n_decision_bits
    if d_bits > MAX_DECISION_BITS:
        raise ValueError(
            f"{d_bits} decision bits exceed the enumeration limit {MAX_DECISION_BITS}"
        )
    idx = _bit_index(problem)
    n_pol = 1 << d_bits
    gi0 = REGIMES.index(initial_regime)
    disc = math.exp(-problem.rate * problem.dt)
    c = np.array([problem.switch_cost_from[g] for g in REGIMES])

    dist = np.zeros((n_pol, problem.states_at(0), 2))
    dist[:, problem.initial_state, gi0] = 1.0
    cost = np.zeros(n_pol)
    pol_ids = np.arange(n_pol, dtype=np.uint64)

    for n in range(problem.n_steps):
        s_n = problem.states_at(n)
        bits = np.empty((n_pol, s_n, 2), dtype=bool)
        for s in range(s_n):
            for gi in range(2):
                bits[:, s, gi] = (pol_ids >> np.uint64(idx[(n, s, gi)])) & np.uint64(1)
        f = np.stack([problem.running[g][n] for g in REGIMES], axis=1)  # (S, 2)
        f_eff = np.where(bits, f[None, :, ::-1], f[None, :, :])
        step_cost = dist * (bits * c[None, None, :] + f_eff * problem.dt)
        cost += disc**n * step_cost.sum(axis=(1, 2))

        stay = dist * ~bits
        moved = dist * bits
        dist_regime = stay + moved[:, :, ::-1]
        dist = np.einsum("psg,st->ptg", dist_regime, problem.transitions[n])

    g_term = np.stack([problem.terminal[g] for g in REGIMES], axis=1)
    cost += disc**problem.n_steps * (dist * g_term[None, :, :]).sum(axis=(1, 2))

    best = int(np.argmin(cost))
    policy = {
        (n, s, REGIMES[gi]): bool((best >> idx[(n, s, gi)]) & 1)
        for (n, s, gi) in idx
    }
    return float(cost[best]), policy


def evaluate_policy(problem: ToyProblem, initial_regime: str, policy: dict) -> float:
    """Exact expected cost of one fixed policy (plain forward recursion)."""
    disc = math.exp(-problem.rate * problem.dt)
    dist = {(problem.initial_state, initial_regime): 1.0}
    cost = 0.0
    for n in range(problem.n_steps):
        new = {}
        for (s, g), w in dist.items():
            switch = policy.get((n, s, g), False)
            g_eff = other_regime(g) if switch else g
            step = problem.running[g_eff][n][s] * problem.dt
            if switch:
                step += problem.switch_cost_from[g]
            cost += disc**n * w * step
            for s2 in range(problem.states_at(n + 1)):
                p = problem.transitions[n][s, s2]
                if p:
                    new[(s2, g_eff)] = new.get((s2, g_eff), 0.0) + w * p
        dist = new
    for (s, g), w in dist.items():
        cost += disc**problem.n_steps * w * problem.terminal[g][s]
    return cost


def backward_induction(problem: ToyProblem, initial_regime: str) -> float:
    """Independent plain-Python dynamic program (cross-check for the
    enumeration and the production solver's exact mode)."""
    disc = math.exp(-problem.rate * problem.dt)
    n_last = problem.n_steps
    v = {
        g: [float(problem.terminal[g][s]) for s in range(problem.states_at(n_last))]
        for g in REGIMES
    }
    for n in range(n_last - 1, -1, -1):
        nxt = {}
        for g in REGIMES:
            vals = []
            for s in range(problem.states_at(n)):
                ev = sum(
                    problem.transitions[n][s][s2] * v[g][s2]
                    for s2 in range(problem.states_at(n + 1))
                )
                vals.append(float(problem.running[g][n][s]) * problem.dt + disc * ev)
            nxt[g] = vals
        new = {}
        for g in REGIMES:
            other = COLLATERALIZED if g == UNCOLLATERALIZED else UNCOLLATERALIZED
            new[g] = [
                min(nxt[g][s], problem.switch_cost_from[g] + nxt[other][s])
                for s in range(problem.states_at(n))
            ]
        v = new
    return v[initial_regime][problem.initial_state]


def random_problem(rng: np.random.Generator, allow_zero_switch_cost=True) -> ToyProblem:
    """Random instance small enough for full enumeration."""
    sizes = [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2)]
    n_steps, n_states = sizes[int(rng.integers(len(sizes)))]
    transitions = []
    for _ in range(n_steps):
        raw = rng.uniform(0.05, 1.0, size=(n_states, n_states))
        transitions.append(raw / raw.sum(axis=1, keepdims=True))
    running = {
        g: [rng.uniform(0.0, 2.0, size=n_states) for _ in range(n_steps)]
        for g in REGIMES
    }
    terminal = {g: rng.uniform(0.0, 2.0, size=n_states) for g in REGIMES}
    if allow_zero_switch_cost and rng.random() < 0.3:
        costs = {g: 0.0 for g in REGIMES}
    else:
        costs = {g: float(rng.uniform(0.0, 0.6)) for g in REGIMES}
    return ToyProblem(
        transitions=transitions,
        running=running,
        terminal=terminal,
        switch_cost_from=costs,
        dt=float(rng.choice([1.0, 0.25])),
        rate=float(rng.choice([0.0, 0.1])),
        initial_state=int(rng.integers(n_states)),
    )
