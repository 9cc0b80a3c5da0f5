"""Presets and shared defaults.

`desk` is sized for CPU-scale experiments on the synthetic corpus;
`paper` mirrors the reference hyperparameters (4-layer/128-dim topology
networks, 8-layer/512-dim diffusion networks, 50-face corpora).

The validity tolerance is the sewing-tolerance analogue used when
scoring generated solids: 1e-3 is the strict default of the checker
itself; the desk preset evaluates at 5e-2 because short-budget denoisers
land geometry within a few 1e-2 of incidence, not 1e-3.
"""

import json
from dataclasses import asdict, dataclass

GAP_TOL_DEFAULT = 1e-3
HASH_PRECISION_DEFAULT = 4
JSD_GRID_DEFAULT = 28
POINTS_PER_CLOUD_DEFAULT = 2000
MAX_FACES_DEFAULT = 50
MAX_EDGES_PER_FACE_DEFAULT = 30


@dataclass(frozen=True)
class Preset:
    name: str
    topo_layers: int
    topo_dim: int
    topo_heads: int
    diff_layers: int
    diff_dim: int
    diff_heads: int
    d_cond_topo: int
    d_cond_diff: int
    d_z: int
    n_f_max: int
    n_e_max: int
    k_max: int = 8
    timesteps: int = 500
    beta_min: float = 1e-4
    beta_max: float = 0.02
    dropout: float = 0.1
    learning_rate: float = 5e-4
    weight_decay: float = 1e-6
    validity_tol: float = GAP_TOL_DEFAULT
    postprocess_threshold: float = 1e-3

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


DESK = Preset(
    name="desk",
    topo_layers=2,
    topo_dim=64,
    topo_heads=4,
    diff_layers=2,
    diff_dim=64,
    diff_heads=4,
    d_cond_topo=64,
    d_cond_diff=64,
    d_z=64,
    n_f_max=12,
    n_e_max=32,
    validity_tol=5e-2,
    postprocess_threshold=5e-2,
)

PAPER = Preset(
    name="paper",
    topo_layers=4,
    topo_dim=128,
    topo_heads=4,
    diff_layers=8,
    diff_dim=512,
    diff_heads=8,
    d_cond_topo=128,
    d_cond_diff=512,
    d_z=64,
    n_f_max=50,
    n_e_max=256,
)

PRESETS = {"desk": DESK, "paper": PAPER}


def get_preset(name):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]
