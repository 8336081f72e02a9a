"""Cascade assembly: collaborative cascades (COCAs) and the full network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import torch
from torch import Tensor, nn

from .correction import Correction, oc_blend, dc_project
from .errors import ConfigError
from .gsam import GCFF, CocaState, InitCell, PlainAttention, rc_weight, split_confidence
from .lowrank import LowRankSubnet
from .mri_ops import adjoint_A
from .sparse import SparseSubnet

VARIANTS = ("original", "addition", "no_gsam", "no_gates", "no_rc", "no_oc", "no_correction")

# variant -> (attention kind, number of confidence maps, has correction module)
_WIRING = {
    "original": ("gcff", 2, True),
    "addition": (None, 0, False),
    "no_gsam": (None, 0, True),
    "no_gates": ("plain", 2, True),
    "no_rc": ("gcff", 1, True),
    "no_oc": ("gcff", 1, True),
    "no_correction": ("gcff", 2, False),
}


@dataclass
class ModelConfig:
    K: int = 10
    variant: str = "original"
    sparse_features: int = 32
    lowrank_chans: tuple = (16, 32, 64, 128)
    hidden: int = 8
    correction_chans: tuple = (4, 8, 16, 32)
    coils: int = 4
    height: int = 32
    width: int = 32

    def __post_init__(self):
        self.lowrank_chans = tuple(int(c) for c in self.lowrank_chans)
        self.correction_chans = tuple(int(c) for c in self.correction_chans)
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; valid: {', '.join(VARIANTS)}")
        for name in ("sparse_features", "hidden", "coils", "height", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.lowrank_chans or not self.correction_chans or min(self.lowrank_chans + self.correction_chans) < 1:
            raise ConfigError("U-Net channel plans must be non-empty and positive")

    @property
    def attention(self) -> Optional[str]:
        return _WIRING[self.variant][0]

    @property
    def n_maps(self) -> int:
        return _WIRING[self.variant][1]

    @property
    def has_correction(self) -> bool:
        return _WIRING[self.variant][2]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lowrank_chans"] = list(self.lowrank_chans)
        d["correction_chans"] = list(self.correction_chans)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**d)


class CocaOutput(NamedTuple):
    x: Tensor
    state: Optional[CocaState]
    r_s: Tensor
    maps: Optional[Tensor]


class Coca(nn.Module):
    """One collaborative cascade."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.variant = config.variant
        self.sparse = SparseSubnet(config.sparse_features)
        self.lowrank = LowRankSubnet(config.lowrank_chans)
        if config.attention == "gcff":
            self.attention = GCFF(config.hidden, config.n_maps)
        elif config.attention == "plain":
            self.attention = PlainAttention(config.hidden, config.n_maps)
        else:
            self.attention = None
        self.correction = Correction(config.correction_chans) if config.has_correction else None

    def forward(self, x: Tensor, state: Optional[CocaState], y: Tensor, csm: Tensor, mask: Tensor) -> CocaOutput:
        x_s, r_s = self.sparse(x, y, csm, mask)
        x_l = self.lowrank(x, y, csm, mask)
        mean = 0.5 * x_s + 0.5 * x_l
        v = self.variant
        maps = None

        if v == "addition":
            return CocaOutput(mean, state, r_s, None)
        if v == "no_gsam":
            x_o = self.correction(mean)
            return CocaOutput(dc_project(x_o, y, csm, mask, self.correction.mu), state, r_s, None)

        if v == "no_gates":
            maps = self.attention(x_s, x_l)
        else:
            state, maps = self.attention(x_s, x_l, state)

        if v == "no_rc":
            x_a, m_o = mean, maps
        elif v == "no_oc":
            x_a, m_o = rc_weight(x_s, x_l, maps), None
        else:
            m_r, m_o = split_confidence(maps)
            x_a = rc_weight(x_s, x_l, m_r)

        if v == "no_correction":
            return CocaOutput(x_a, state, r_s, maps)

        x_r = self.correction(x_a)
        x_o = x_r if m_o is None else oc_blend(x_a, x_r, m_o)
        return CocaOutput(dc_project(x_o, y, csm, mask, self.correction.mu), state, r_s, maps)


class ReconOutput(NamedTuple):
    x: Tensor
    intermediates: list
    r_s: list
    maps: list


class MCUNet(nn.Module):
    """Multi-prior collaborative unfolding network.

    ``forward(y, csm, mask)`` starts from the zero-filled image ``A^H y`` and
    runs ``config.K`` cascades. Every cascade output is returned so the loss
    can supervise them all.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.init_cell = InitCell(config.hidden) if config.attention == "gcff" else None
        self.cocas = nn.ModuleList(Coca(config) for _ in range(config.K))

    def forward(self, y: Tensor, csm: Tensor, mask: Tensor) -> ReconOutput:
        x = adjoint_A(y, csm, mask)
        state = self.init_cell(x) if self.init_cell is not None else None
        xs, rs, maps = [], [], []
        for coca in self.cocas:
            out = coca(x, state, y, csm, mask)
            x, state = out.x, out.state
            xs.append(x)
            rs.append(out.r_s)
            maps.append(out.maps)
        return ReconOutput(x, xs, rs, maps)

    def symmetry_terms(self, r_s: list) -> list:
        return [coca.sparse.symmetry_penalty(r) for coca, r in zip(self.cocas, r_s)]

    def zero_attention_(self) -> "MCUNet":
        """Zero every attention and initial-cell parameter (confidence maps become 0.5)."""
        mods = [c.attention for c in self.cocas if c.attention is not None]
        if self.init_cell is not None:
            mods.append(self.init_cell)
        with torch.no_grad():
            for m in mods:
                for p in m.parameters():
                    p.zero_()
        return self


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _conv(cin: int, cout: int, k: int = 3, bias: bool = True) -> int:
    return cin * cout * k * k + (cout if bias else 0)


def _unet_params(cin: int, cout: int, chans) -> int:
    n, prev = 0, cin
    for c in chans:
        n += _conv(prev, c) + _conv(c, c)
        prev = c
    n += 2 * _conv(prev, prev)
    dec_out = list(reversed(chans[:-1])) + [chans[0]]
    for skip, out in zip(reversed(chans), dec_out):
        n += _conv(prev + skip, out) + _conv(out, out)
        prev = out
    return n + _conv(prev, cout, 1)


def parameter_breakdown(config: ModelConfig) -> dict:
    """Analytic parameter counts per component of one cascade, plus shared ones."""
    f, hd = config.sparse_features, config.hidden
    out = {
        "sparse": 2 + _conv(2, f) + _conv(f, f) + _conv(f, f) + _conv(f, 2),
        "lowrank": 2 + _unet_params(2, 2, config.lowrank_chans),
        "attention": 0,
        "correction": 0,
        "init_cell": 0,
    }
    if config.attention == "gcff":
        out["attention"] = (
            _conv(4, hd) + _conv(hd, 4 * hd) + _conv(hd, 4 * hd, bias=False)
            + _conv(2 * hd, config.n_maps) + _conv(2 * hd, hd, 1, bias=False)
        )
        out["init_cell"] = _conv(2, hd)
    elif config.attention == "plain":
        out["attention"] = _conv(4, hd) + _conv(hd, config.n_maps)
    if config.has_correction:
        out["correction"] = 1 + _unet_params(2, 2, config.correction_chans)
    return out


def parameter_count(config: ModelConfig) -> int:
    b = parameter_breakdown(config)
    per_coca = b["sparse"] + b["lowrank"] + b["attention"] + b["correction"]
    return config.K * per_coca + b["init_cell"]


def coca_forward(x_prev: Tensor, state, y: Tensor, csm: Tensor, mask: Tensor, coca: Coca) -> CocaOutput:
    return coca(x_prev, state, y, csm, mask)


def mcunet_forward(y: Tensor, csm: Tensor, mask: Tensor, model: MCUNet) -> ReconOutput:
    return model(y, csm, mask)
