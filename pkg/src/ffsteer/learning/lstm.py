"""Horizon LSTM: linear input projection, one LSTM layer, dropout, scalar head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ffsteer.learning.layers import (
    LstmCache,
    ParamSet,
    dense_backward,
    dense_forward,
    dropout_mask,
    glorot,
    lstm_backward,
    lstm_forward,
)
from ffsteer.learning.model import LearnedModel

N_CHANNELS = 3


@dataclass
class _Cache:
    x: np.ndarray
    proj: np.ndarray
    lstm: LstmCache
    h_last: np.ndarray
    mask: np.ndarray
    h_drop: np.ndarray


class LstmFfModel(LearnedModel):
    """Maps an (N, 3) horizon of (v_x, a_x, a_y) to a steering deviation.

    The curvature input is accepted for interface symmetry with the MS-NN
    and ignored.

    Args:
        horizon_n: horizon length N.
        input_dim: width of the linear projection feeding the LSTM.
        hidden: LSTM hidden size.
        dropout: rate applied to the final hidden state in training mode.
        rng: initialisation stream; ``None`` leaves all parameters zero.
    """

    kind = "lstm"

    def __init__(
        self,
        horizon_n: int = 10,
        input_dim: int = 16,
        hidden: int = 64,
        dropout: float = 0.1,
        rng: np.random.Generator | None = None,
    ):
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        self.input_dim = int(input_dim)
        self.hidden = int(hidden)
        self.dropout = float(dropout)
        D, H = self.input_dim, self.hidden
        params = ParamSet(
            {
                "w_in": (N_CHANNELS, D),
                "b_in": (D,),
                "w_lstm": (D + H, 4 * H),
                "b_lstm": (4 * H,),
                "w_out": (H, 1),
                "b_out": (1,),
            }
        )
        super().__init__(params, horizon_n)
        if rng is not None:
            self.init(rng)

    def init(self, rng: np.random.Generator) -> None:
        D, H = self.input_dim, self.hidden
        p = self.params
        p.view("w_in")[...] = glorot(rng, N_CHANNELS, D)
        p.view("b_in")[...] = 0.0
        p.view("w_lstm")[...] = glorot(rng, D + H, H, (D + H, 4 * H))
        b = p.view("b_lstm")
        b[...] = 0.0
        b[H : 2 * H] = 1.0  # forget gate starts open
        p.view("w_out")[...] = glorot(rng, H, 1)
        p.view("b_out")[...] = 0.0

    def arch(self) -> dict:
        return {
            "horizon_n": self.horizon_n,
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "dropout": self.dropout,
        }

    @classmethod
    def from_arch(cls, arch: dict, rng: np.random.Generator | None = None) -> "LstmFfModel":
        return cls(arch["horizon_n"], arch["input_dim"], arch["hidden"], arch["dropout"], rng)

    def forward(self, hn, rho_n=None, train: bool = False, rng=None):
        p = self.params
        x = np.asarray(hn, dtype=float)
        B, T, _ = x.shape
        proj = dense_forward(x.reshape(B * T, N_CHANNELS), p.view("w_in"), p.view("b_in")).reshape(B, T, -1)
        h_last, lcache = lstm_forward(proj, p.view("w_lstm"), p.view("b_lstm"), self.hidden)
        if train and self.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            mask = dropout_mask(rng, h_last.shape, self.dropout)
        else:
            mask = np.ones_like(h_last)
        h_drop = h_last * mask
        y = dense_forward(h_drop, p.view("w_out"), p.view("b_out"))[:, 0]
        return y, _Cache(x, proj, lcache, h_last, mask, h_drop)

    def backward(self, dy, cache: _Cache) -> np.ndarray:
        p = self.params
        grad = p.zeros()
        g = p.grad_views(grad)
        B, T, _ = cache.x.shape
        dh_drop, g["w_out"][...], g["b_out"][...] = dense_backward(dy[:, None], cache.h_drop, p.view("w_out"))
        dproj, g["w_lstm"][...], g["b_lstm"][...] = lstm_backward(dh_drop * cache.mask, cache.lstm, p.view("w_lstm"))
        _, g["w_in"][...], g["b_in"][...] = dense_backward(
            dproj.reshape(B * T, -1), cache.x.reshape(B * T, N_CHANNELS), p.view("w_in")
        )
        return grad
