"""Model-structured network: gated local handling-diagram experts plus a transient branch.

Region membership is built per gating dimension from logistic ramps at
fixed boundaries. A region's unnormalised log-membership is the sum of the
log-ramps of its interval in every dimension, i.e. the log of their
product, and a softmax over regions normalises the products. Each region
owns an odd cubic expert ``c1 a + c3 a^3`` in normalised lateral
acceleration. A small tanh network on the flattened horizon and the
curvature adds the transient part.

Gating uses ``|a_y|`` rather than ``a_y``: left and right turns then share
regions and the steady-state output is odd in ``a_y`` by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ffsteer.learning.data import CH_AX, CH_AY, CH_V
from ffsteer.learning.layers import ParamSet, dense_backward, dense_forward, glorot, sigmoid
from ffsteer.learning.model import LearnedModel

GATE_DIMS = ("abs_a_y", "a_x", "v_x")


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def quantile_boundaries(values: np.ndarray, splits: int) -> list[float]:
    """Interior interval boundaries at the equally spaced quantiles of ``values``."""
    if splits < 1:
        raise ValueError("splits must be >= 1")
    qs = np.arange(1, splits) / splits
    return [float(b) for b in np.quantile(values, qs)] if splits > 1 else []


@dataclass
class _Cache:
    gate_x: np.ndarray
    member: np.ndarray
    a: np.ndarray
    expert: np.ndarray
    steady: np.ndarray
    t_in: np.ndarray
    t_h1: np.ndarray
    t_h2: np.ndarray


class MsnnModel(LearnedModel):
    """Simplified MS-NN on normalised inputs.

    Args:
        horizon_n: horizon length N (transient-branch input is 3 N + 1).
        boundaries: for each gating dimension (|a_y|, a_x, v_x) the sorted
            interior boundaries in normalised units; ``k`` boundaries give
            ``k + 1`` intervals and the regions are their Cartesian product.
        hidden: width of both transient hidden layers.
        slope0: initial logistic slope of every gating dimension.
        rng: initialisation stream; ``None`` leaves all parameters zero.
    """

    kind = "msnn"

    def __init__(
        self,
        horizon_n: int = 10,
        boundaries=((0.8,), (0.0,), (0.0,)),
        hidden: int = 32,
        slope0: float = 4.0,
        rng: np.random.Generator | None = None,
    ):
        if len(boundaries) != len(GATE_DIMS):
            raise ValueError("need one boundary list per gating dimension")
        self.boundaries = [sorted(float(b) for b in dim) for dim in boundaries]
        self.hidden = int(hidden)
        self.slope0 = float(slope0)
        self.splits = tuple(len(b) + 1 for b in self.boundaries)
        self.n_regions = int(np.prod(self.splits))
        # interval index of every region in every dimension, C order
        self.region_index = np.array(list(np.ndindex(*self.splits)), dtype=int).reshape(self.n_regions, len(GATE_DIMS))
        n_in = 3 * horizon_n + 1
        Hd = self.hidden
        params = ParamSet(
            {
                "gate_slope": (len(GATE_DIMS),),
                "c1": (self.n_regions,),
                "c3": (self.n_regions,),
                "t_w1": (n_in, Hd),
                "t_b1": (Hd,),
                "t_w2": (Hd, Hd),
                "t_b2": (Hd,),
                "t_w3": (Hd, 1),
                "t_b3": (1,),
            }
        )
        super().__init__(params, horizon_n)
        if rng is not None:
            self.init(rng)

    @classmethod
    def from_data(cls, gate_inputs: np.ndarray, splits=(2, 2, 2), horizon_n: int = 10, rng=None, **kw) -> "MsnnModel":
        """Place boundaries at quantiles of normalised gating inputs of shape (M, 3)."""
        bounds = [quantile_boundaries(gate_inputs[:, d], splits[d]) for d in range(len(GATE_DIMS))]
        return cls(horizon_n, bounds, rng=rng, **kw)

    def init(self, rng: np.random.Generator) -> None:
        p = self.params
        p.view("gate_slope")[...] = self.slope0
        p.view("c1")[...] = 1.0
        p.view("c3")[...] = 0.0
        n_in = p.shapes["t_w1"][0]
        Hd = self.hidden
        p.view("t_w1")[...] = glorot(rng, n_in, Hd)
        p.view("t_b1")[...] = 0.0
        p.view("t_w2")[...] = glorot(rng, Hd, Hd)
        p.view("t_b2")[...] = 0.0
        p.view("t_w3")[...] = glorot(rng, Hd, 1)
        p.view("t_b3")[...] = 0.0

    def zero_transient(self) -> None:
        """Switch off the transient branch so only the gated experts remain."""
        self.params.view("t_w3")[...] = 0.0
        self.params.view("t_b3")[...] = 0.0

    def arch(self) -> dict:
        return {
            "horizon_n": self.horizon_n,
            "boundaries": [list(b) for b in self.boundaries],
            "hidden": self.hidden,
            "slope0": self.slope0,
        }

    @classmethod
    def from_arch(cls, arch: dict, rng: np.random.Generator | None = None) -> "MsnnModel":
        return cls(arch["horizon_n"], arch["boundaries"], arch["hidden"], arch["slope0"], rng)

    @staticmethod
    def gate_inputs(hn: np.ndarray) -> np.ndarray:
        """(|a_y|, a_x, v_x) at horizon step 0, shape (B, 3)."""
        return np.column_stack([np.abs(hn[:, 0, CH_AY]), hn[:, 0, CH_AX], hn[:, 0, CH_V]])

    def _log_membership(self, gate_x: np.ndarray) -> np.ndarray:
        slope = self.params.view("gate_slope")
        logm = np.zeros((len(gate_x), self.n_regions))
        for d, bounds in enumerate(self.boundaries):
            for g in range(self.n_regions):
                j = self.region_index[g, d]
                if j > 0:
                    logm[:, g] += _log_sigmoid(slope[d] * (gate_x[:, d] - bounds[j - 1]))
                if j < len(bounds):
                    logm[:, g] += _log_sigmoid(-slope[d] * (gate_x[:, d] - bounds[j]))
        return logm

    def membership(self, gate_x: np.ndarray) -> np.ndarray:
        """Normalised region memberships, shape (B, G); rows sum to one."""
        logm = self._log_membership(gate_x)
        logm -= logm.max(axis=1, keepdims=True)
        e = np.exp(logm)
        return e / e.sum(axis=1, keepdims=True)

    def forward(self, hn, rho_n, train: bool = False, rng=None):
        p = self.params
        hn = np.asarray(hn, dtype=float)
        B = len(hn)
        gate_x = self.gate_inputs(hn)
        member = self.membership(gate_x)
        a = hn[:, 0, CH_AY]
        expert = a[:, None] * p.view("c1")[None, :] + (a**3)[:, None] * p.view("c3")[None, :]
        steady = np.sum(member * expert, axis=1)
        t_in = np.concatenate([hn.reshape(B, -1), np.asarray(rho_n, dtype=float).reshape(B, 1)], axis=1)
        t_h1 = np.tanh(dense_forward(t_in, p.view("t_w1"), p.view("t_b1")))
        t_h2 = np.tanh(dense_forward(t_h1, p.view("t_w2"), p.view("t_b2")))
        trans = dense_forward(t_h2, p.view("t_w3"), p.view("t_b3"))[:, 0]
        return steady + trans, _Cache(gate_x, member, a, expert, steady, t_in, t_h1, t_h2)

    def backward(self, dy, cache: _Cache) -> np.ndarray:
        p = self.params
        grad = p.zeros()
        g = p.grad_views(grad)
        m, a = cache.member, cache.a
        # experts
        dexp = dy[:, None] * m
        g["c1"][...] = dexp.T @ a
        g["c3"][...] = dexp.T @ a**3
        # softmax over log-memberships: dy/dlogm_g = m_g (expert_g - steady)
        dlogm = dy[:, None] * m * (cache.expert - cache.steady[:, None])
        slope = p.view("gate_slope")
        for d, bounds in enumerate(self.boundaries):
            x = cache.gate_x[:, d]
            total = 0.0
            for gi in range(self.n_regions):
                j = self.region_index[gi, d]
                if j > 0:
                    u = x - bounds[j - 1]
                    total += np.dot(dlogm[:, gi], (1.0 - sigmoid(slope[d] * u)) * u)
                if j < len(bounds):
                    u = x - bounds[j]
                    total += np.dot(dlogm[:, gi], -sigmoid(slope[d] * u) * u)
            g["gate_slope"][d] = total
        # transient branch
        dh2, g["t_w3"][...], g["t_b3"][...] = dense_backward(dy[:, None], cache.t_h2, p.view("t_w3"))
        dz2 = dh2 * (1.0 - cache.t_h2**2)
        dh1, g["t_w2"][...], g["t_b2"][...] = dense_backward(dz2, cache.t_h1, p.view("t_w2"))
        dz1 = dh1 * (1.0 - cache.t_h1**2)
        _, g["t_w1"][...], g["t_b1"][...] = dense_backward(dz1, cache.t_in, p.view("t_w1"))
        return grad
