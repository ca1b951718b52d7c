import os
import json
import math
import logging
import tempfile
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from errors import InvalidInputError


class OutputFormat(Enum):
    JSON = "json"
    CSV = "csv"
    BOTH = "both"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings '-inf', 'inf', 'nan'"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def dumps(payload: Dict) -> str:
    """Deterministic single-line JSON"""
    return json.dumps(to_jsonable(payload), sort_keys=True, allow_nan=False)


class ArtifactWriter:
    """Writes JSON / CSV artifacts atomically (temporary file, then rename)"""

    def __init__(self, out_path: Optional[str], output: str = "json"):
        try:
            self.output = OutputFormat(output)
        except ValueError:
            raise InvalidInputError(f"Unknown output format '{output}' (json, csv or both)")
        self.out_path = out_path

    @property
    def wants_json(self) -> bool:
        return self.output in (OutputFormat.JSON, OutputFormat.BOTH)

    @property
    def wants_csv(self) -> bool:
        return self.output in (OutputFormat.CSV, OutputFormat.BOTH)

    def _atomic_write(self, path: str, text: str):
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.splitext(path)[1])
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
            os.replace(temp_path, path)
        except Exception:
            if os.path.exists(temp_path):
                os.remove(temp_path)
            raise
        logging.info(f"Wrote artifact {path}")

    def write_json(self, payload: Dict, path: Optional[str] = None) -> str:
        path = path or f"{self.out_path}.json"
        self._atomic_write(path, dumps(payload) + "\n")
        return path

    def write_csv(self, frame: pd.DataFrame, path: Optional[str] = None) -> str:
        path = path or f"{self.out_path}.csv"
        self._atomic_write(path, frame.to_csv(index=False, lineterminator="\n"))
        return path

    def write(self, payload: Dict, frame: Optional[pd.DataFrame] = None) -> List[str]:
        """Write the requested artifacts; without out_path nothing is written"""
        if not self.out_path:
            return []
        written = []
        if self.wants_json:
            written.append(self.write_json(payload))
        if self.wants_csv and frame is not None:
            written.append(self.write_csv(frame))
        return written


def read_rewards(path: str) -> np.ndarray:
    """Rewards from a CSV with a 'reward' column or a JSON file with a 'rewards' list"""
    try:
        if path.lower().endswith(".json"):
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
            values = data["rewards"] if isinstance(data, dict) else data
            return np.asarray(values, dtype=float)
        frame = pd.read_csv(path, float_precision="round_trip")
        return frame["reward"].to_numpy(dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as e:
        raise InvalidInputError(f"Cannot read rewards from {path}: {str(e)}")


def read_thetas(path: str) -> np.ndarray:
    """BTL scores from a CSV with a 'theta' column or a JSON list"""
    try:
        if path.lower().endswith(".json"):
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
            values = data["thetas"] if isinstance(data, dict) else data
            return np.asarray(values, dtype=float)
        frame = pd.read_csv(path, float_precision="round_trip")
        return frame["theta"].to_numpy(dtype=float)
    except (OSError, KeyError, ValueError, TypeError) as e:
        raise InvalidInputError(f"Cannot read BTL scores from {path}: {str(e)}")
