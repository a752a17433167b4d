"""Built-in reproduction presets with the reference parameterizations."""

from __future__ import annotations

import math

from .modelfile import ModelFile

__all__ = ["PRESETS", "preset_model_file", "preset_names"]

_SQRT_PI2 = 2.0 * math.sqrt(math.pi)


def _example_a() -> dict:
    return {
        "modes": 1,
        "params": {},
        "shape": {"rect": [20]},
        "hamiltonian": [{"coeff": 1.0, "op": "ad0*a0"}],
        "dissipators": [{"op": "a0"}],
        "initial": {"fock": [3]},
        "solver": {"T": 1.0, "scheme": "adaptive_rk", "time_tol": 1e-13},
    }


def _example_b() -> dict:
    return {
        "modes": 1,
        "params": {},
        "shape": {"rect": [20]},
        "hamiltonian": [
            {"coeff": {"expr": "sin(t)", "sup": 1.0, "dsup": 1.0}, "op": "a0 + ad0"}
        ],
        "dissipators": [],
        "initial": {"fock": [0]},
        "solver": {
            "T": 1.0,
            "scheme": "euler",
            "dt": 5e-4,
            "time_certificate": True,
        },
    }


def _example_c(cap: int = 40) -> dict:
    return {
        "modes": 1,
        "params": {"alpha": 1.0},
        "shape": {"rect": [cap]},
        "hamiltonian": [],
        "dissipators": [{"op": "a0^2 - alpha^2*id"}],
        "initial": {"fock": [0]},
        "solver": {"T": 1.0, "scheme": "adaptive_rk", "time_tol": 1e-14},
    }


def _example_d(cap: int = 40) -> dict:
    r = 1.25
    return {
        "modes": 1,
        "params": {
            "alpha": 1.0,
            "ch": math.cosh(r),
            "sh": math.sinh(r),
        },
        "shape": {"rect": [cap]},
        "hamiltonian": [],
        "dissipators": [
            {
                "op": (
                    "ch^2*a0^2 + ch*sh*a0*ad0 + ch*sh*ad0*a0 + sh^2*ad0^2"
                    " - alpha^2*id"
                )
            }
        ],
        "initial": {"fock": [0]},
        "solver": {"T": 1.0, "scheme": "adaptive_rk", "time_tol": 1e-14},
    }


def _example_e(caps=(40, 20)) -> dict:
    return {
        "modes": 2,
        "params": {"alpha": 1.0},
        "shape": {"rect": list(caps)},
        "hamiltonian": [
            {"coeff": 1.0, "op": "a0^2*bd0 + ad0^2*b0 - alpha^2*b0 - alpha^2*bd0"}
        ],
        "dissipators": [{"op": "b0"}],
        "initial": {"fock": [0, 0]},
        "solver": {"T": 1.0, "scheme": "adaptive_rk", "time_tol": 1e-13},
    }


def _gkp(cap: int = 30) -> dict:
    eps = 0.15
    eta = _SQRT_PI2
    t_final = 2.0 / (eps * eta)
    return {
        "modes": 1,
        "params": {},
        "shape": {"rect": [cap]},
        "hamiltonian": [],
        "dissipators": [
            {"gkp": {"A": 1.0, "eta": eta, "eps": eps, "k": k}} for k in range(4)
        ],
        "initial": {"fock": [0]},
        "solver": {"T": t_final, "scheme": "rk4", "dt": 5e-4 * t_final},
    }


def _adaptive_1d(start: int = 15) -> dict:
    doc = _example_c(cap=start)
    doc["solver"] = {
        "T": 1.0,
        "scheme": "adaptive_rk",
        "time_tol": 1e-14,
        "space_tol": 1e-11,
        "downsize_factor": 5.0,
        "grow_step": 4,
        "shrink_step": 4,
        "max_dimension": 512,
        "adaptive_space": True,
    }
    return doc


def _adaptive_2d() -> dict:
    return {
        "modes": 2,
        "params": {},
        "shape": {"weighted": {"w": ["1/2", "1"], "cap": "6"}},
        "hamiltonian": [
            {"coeff": 1.0, "op": "a0^2*bd0 + ad0^2*b0"},
            {
                # alpha(t)^2 drive: 1.5^2 until t = 1.5, then off
                "coeff": {"table": [[0.0, -2.25], [1.5, 0.0]], "sup": 2.25},
                "op": "b0 + bd0",
            },
        ],
        "dissipators": [{"op": "b0"}],
        "initial": {"fock": [0, 0]},
        # the reference parameter line quotes space_tol = 1e-11, but the
        # described run only matches the 1e-6 working tolerance: at 1e-11
        # the hot-buffer transient needs dimensions beyond 2000 and the
        # driver reports an honest certification failure instead
        "solver": {
            "T": 8.0,
            "scheme": "adaptive_rk",
            "time_tol": 1e-12,
            "space_tol": 1e-6,
            "downsize_factor": 5.0,
            "grow_step": "7",
            "shrink_step": "5",
            "max_dimension": 2048,
            "adaptive_space": True,
        },
    }


PRESETS = {
    "exampleA": _example_a,
    "exampleB": _example_b,
    "exampleC": _example_c,
    "exampleD": _example_d,
    "exampleE": _example_e,
    "gkp": _gkp,
    "adaptive1d": _adaptive_1d,
    "adaptive2d": _adaptive_2d,
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_model_file(name: str, **kwargs) -> ModelFile:
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return ModelFile.from_dict(PRESETS[name](**kwargs))
