import os
import json
import copy
import logging
from typing import Dict, Optional

from errors import InvalidInputError
from models_rewards import InitMode, SolverConfig

THREADS_ENV = "RCL_THREADS"


def deep_merge(defaults: Dict, overrides: Dict) -> Dict:
    """Recursively fill missing keys of overrides from defaults"""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Config:
    def __init__(self, config_path: str = "config.json"):
        self.config_path = config_path
        self.settings = self.load_config()

    def load_config(self) -> Dict:
        """Load configuration from JSON file, filling gaps from the defaults"""
        try:
            if os.path.exists(self.config_path):
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    return deep_merge(self.get_default_config(), json.load(f))
            return self.get_default_config()
        except Exception as e:
            logging.error(f"Error loading config: {str(e)}")
            return self.get_default_config()

    def get_default_config(self) -> Dict:
        """Return default configuration settings"""
        return {
            "solver": {
                "max_iters": 50000,
                "grad_tol": 1e-8,
                "min_gap": 1e-12,
                "seed": 0,
                "direction": "newton"
            },
            "measure": {
                "max_iters": 50000,
                "fw_tol": 1e-8,
                "step_rule": "pairwise"
            },
            "flatness": {
                "c_grid_size": 101,
                "quad_points": 2000
            },
            "promptlab": {
                "prompts": 16,
                "n": 8,
                "fixed": "logsigmoid:sigma=1",
                "open": "negpow:gamma=1,eps=0.1,ext=appendixA",
                "concrete": "linear"
            },
            "output": {
                "format": "json",
                "directory": "."
            },
            "logging": {
                "file": "reward_collapse.log",
                "level": "INFO"
            }
        }

    def get_solver_settings(self) -> Dict:
        """Finite-n and BTL solver settings"""
        return self.settings.get("solver", {})

    def get_measure_settings(self) -> Dict:
        """Frank-Wolfe settings for the grid measure"""
        return self.settings.get("measure", {})

    def get_flatness_settings(self) -> Dict:
        """Quadrature sizes for the flatness check"""
        return self.settings.get("flatness", {})

    def get_promptlab_settings(self) -> Dict:
        """Batch size and utility strings for the collapse experiment"""
        return self.settings.get("promptlab", {})

    def get_output_settings(self) -> Dict:
        """Default output format and the directory relative artifact paths land in"""
        return self.settings.get("output", {})

    def get_logging_settings(self) -> Dict:
        """Log file and level"""
        return self.settings.get("logging", {})

    def output_format(self) -> str:
        fmt = self.get_output_settings().get("format", "json")
        if fmt not in ("json", "csv", "both"):
            raise InvalidInputError(f"Unknown output format '{fmt}' in config")
        return fmt

    def resolve_output_path(self, path: Optional[str]) -> Optional[str]:
        """Place a relative artifact path under output.directory"""
        if path is None or os.path.isabs(path):
            return path
        return os.path.join(self.get_output_settings().get("directory", "."), path)

    def get_thread_count(self) -> int:
        """RCL_THREADS if set to a positive integer, else the hardware count"""
        raw = os.environ.get(THREADS_ENV)
        if raw:
            try:
                value = int(raw)
                if value > 0:
                    return value
            except ValueError:
                pass
            logging.warning(f"Ignoring invalid {THREADS_ENV}={raw!r}")
        return os.cpu_count() or 1

    def solver_config(self, **overrides) -> SolverConfig:
        """SolverConfig from the solver section; None-valued overrides are ignored"""
        settings = dict(self.get_solver_settings())
        settings.update({key: value for key, value in overrides.items() if value is not None})
        try:
            if "init" in settings and not isinstance(settings["init"], InitMode):
                settings["init"] = InitMode(settings["init"])
            return SolverConfig(**settings)
        except (TypeError, ValueError) as e:
            raise InvalidInputError(f"Invalid solver settings: {str(e)}")

    def measure_config(self, **overrides) -> SolverConfig:
        """SolverConfig for the Frank-Wolfe optimizer (fw_tol plays the role of grad_tol)"""
        measure = self.get_measure_settings()
        settings = {
            "max_iters": measure.get("max_iters", 50000),
            "grad_tol": measure.get("fw_tol", 1e-8),
            "step_rule": measure.get("step_rule", "pairwise"),
        }
        settings.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return SolverConfig(**settings)
        except (TypeError, ValueError) as e:
            raise InvalidInputError(f"Invalid measure settings: {str(e)}")
