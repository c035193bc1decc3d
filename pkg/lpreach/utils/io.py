"""Result file writers and readers

Every number is written with 17 significant digits and read back with the
round-trip float parser, so files reproduce the in-memory values exactly.
"""
import json
import logging
from pathlib import Path
from typing import Optional, Sequence, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel

from lpreach.services.reach import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

ModelT = TypeVar("ModelT", bound=BaseModel)


class ResultWriter:
    """Writers for solution, summary, trajectory and table files"""

    @staticmethod
    def _prepare(path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_json(document: BaseModel, path: Path) -> Path:
        """Write a pydantic document; floats use repr, which round-trips"""
        try:
            path = ResultWriter._prepare(path)
            path.write_text(document.model_dump_json(indent=2), encoding="utf-8")
            logger.debug(f"Wrote {type(document).__name__} to {path}")
            return path
        except OSError as e:
            logger.error(f"Error writing {path}: {e}")
            raise

    @staticmethod
    def read_json(path: Path, model: Type[ModelT]) -> ModelT:
        return model.model_validate_json(Path(path).read_text(encoding="utf-8"))

    @staticmethod
    def trajectory_frame(traj: Trajectory, obstacle_bounds: Optional[Sequence[float]] = None) -> pd.DataFrame:
        """One row per stored step: t, y_lo_*, y_hi_*, optional obstacle_bound"""
        m = traj.y_lo.shape[1]
        data = {"t": traj.times}
        for i in range(m):
            data[f"y_lo_{i}"] = traj.y_lo[:, i]
        for i in range(m):
            data[f"y_hi_{i}"] = traj.y_hi[:, i]
        if obstacle_bounds is not None:
            data["obstacle_bound"] = np.asarray(obstacle_bounds, dtype=float)
        return pd.DataFrame(data)

    @staticmethod
    def write_trajectory(traj: Trajectory, path: Path, obstacle_bounds: Optional[Sequence[float]] = None) -> Path:
        path = ResultWriter._prepare(path)
        ResultWriter.trajectory_frame(traj, obstacle_bounds).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.debug(f"Wrote {traj.length} trajectory records to {path}")
        return path

    @staticmethod
    def write_table(values: np.ndarray, columns: Sequence[str], path: Path) -> Path:
        path = ResultWriter._prepare(path)
        frame = pd.DataFrame(np.atleast_2d(np.asarray(values, dtype=float)), columns=list(columns))
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def read_table(path: Path) -> pd.DataFrame:
        return pd.read_csv(path, float_precision="round_trip")

    @staticmethod
    def write_text(text: str, path: Path) -> Path:
        path = ResultWriter._prepare(path)
        path.write_text(text, encoding="utf-8")
        return path


def load_json_document(path: Path, model: Type[ModelT]) -> ModelT:
    """
    Parse a JSON input document

    Raises:
        OSError: the file cannot be read
        json.JSONDecodeError: syntax error (carries lineno/colno)
        pydantic.ValidationError: the document does not fit ``model``
    """
    text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    return model.model_validate(raw)
