"""Step-indexed training controllers: sparsity annealing, CMR decay,
block-coordinate gating, and the scalar penalty terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PruneSchedule:
    """Polynomial sparsity annealing from s_initial to s_final over
    [begin_step, end_step], applied only every prune_every steps."""

    s_final: float
    begin_step: int
    end_step: int
    s_initial: float = 0.0
    prune_every: int = 1
    exponent: int = 3

    def __post_init__(self):
        if not 0.0 <= self.s_initial <= self.s_final <= 1.0:
            raise ValueError("need 0 <= s_initial <= s_final <= 1")
        if self.begin_step >= self.end_step:
            raise ValueError("begin_step must precede end_step")
        if self.prune_every < 1:
            raise ValueError("prune_every must be positive")

    def sparsity_at(self, step: int) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        if step < self.begin_step:
            return self.s_initial
        if step >= self.end_step:
            return self.s_final
        # hold between prune events
        q = self.begin_step + ((step - self.begin_step) // self.prune_every) \
            * self.prune_every
        frac = (q - self.begin_step) / (self.end_step - self.begin_step)
        s = self.s_final + (self.s_initial - self.s_final) * (1.0 - frac) ** self.exponent
        return min(max(s, self.s_initial), self.s_final)

    def is_prune_step(self, step: int) -> bool:
        if step < self.begin_step or step > self.end_step:
            return False
        return (step - self.begin_step) % self.prune_every == 0


@dataclass(frozen=True)
class CmrSchedule:
    """Drop-probability schedule for co-matrix regularization.

    kinds: constant (p0 throughout), linDec (linear to zero across the
    pruning window), expDec (proportional to the doping term's remaining
    density above its final level).
    """

    kind: str
    p0: float

    KINDS = ("constant", "linDec", "expDec", "off")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}")
        if not 0.0 <= self.p0 < 1.0:
            raise ValueError("p0 must be in [0, 1)")

    def p_at(self, step: int, prune: PruneSchedule, current_density: float) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        if not 0.0 <= current_density <= 1.0:
            raise ValueError("current_density must be in [0, 1]")
        if self.kind == "off":
            return 0.0
        if self.kind == "constant":
            return self.p0
        if step < prune.begin_step:
            return self.p0
        if self.kind == "linDec":
            if step >= prune.end_step:
                return 0.0
            frac = (step - prune.begin_step) / (prune.end_step - prune.begin_step)
            return self.p0 * (1.0 - frac)
        # expDec: proportional to remaining density above the final level
        d_final = 1.0 - prune.s_final
        if current_density <= d_final + 1e-12:
            return 0.0
        return self.p0 * (current_density - d_final) / (1.0 - d_final)


@dataclass(frozen=True)
class BcdPolicy:
    """Alternates gradient flow between the structured and sparse terms."""

    enabled: bool = False
    period_epochs: int = 1

    def __post_init__(self):
        if self.period_epochs < 1:
            raise ValueError("period_epochs must be positive")

    def gate(self, epoch: int) -> str:
        """Returns which term receives gradients: 'structured', 'sparse', 'both'."""
        if not self.enabled:
            return "both"
        phase = (epoch // self.period_epochs) % 2
        return "structured" if phase == 0 else "sparse"


@dataclass(frozen=True)
class PenaltyConfig:
    """Scalar penalties on the per-weight alpha/beta multipliers.

    'beta_only' penalizes |beta|; 'beta_inv_alpha' penalizes |beta| + 1/|alpha|.
    """

    mode: str = "none"
    coeff: float = 1e-4

    MODES = ("none", "beta_only", "beta_inv_alpha")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"mode must be one of {self.MODES}")
        if self.coeff < 0:
            raise ValueError("coeff must be non-negative")

    @property
    def trains_alpha(self) -> bool:
        return self.mode == "beta_inv_alpha"

    @property
    def trains_beta(self) -> bool:
        return self.mode != "none"

    def loss(self, alpha: float, beta: float) -> float:
        if self.mode == "none":
            return 0.0
        if self.mode == "beta_only":
            return self.coeff * abs(beta)
        if abs(alpha) < 1e-8:
            raise ValueError("alpha too close to zero for 1/|alpha| penalty")
        return self.coeff * (abs(beta) + 1.0 / abs(alpha))

    def grads(self, alpha: float, beta: float):
        """(d/dalpha, d/dbeta) of loss(); subgradient 0 at beta = 0."""
        if self.mode == "none":
            return 0.0, 0.0
        g_beta = self.coeff * np.sign(beta)
        if self.mode == "beta_only":
            return 0.0, g_beta
        if abs(alpha) < 1e-8:
            raise ValueError("alpha too close to zero for 1/|alpha| penalty")
        g_alpha = -self.coeff * np.sign(alpha) / alpha ** 2
        return g_alpha, g_beta
