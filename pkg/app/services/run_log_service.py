import csv
import io
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import structlog

from app.config.defaults import RUN_LOG_SCHEMA_VERSION
from app.utils.helpers import content_digest

logger = structlog.get_logger()

# (group, width) where width is 1, 3 or "N"
SIM_GROUPS = [
    ("phase", 1),
    ("sigma", 3), ("omega", 3), ("Omega_true", "N"), ("H", 3),
    ("sigma_hat", 3), ("omega_hat", 3), ("sigma_d", 3), ("omega_d", 3),
    ("sigma_e", 3), ("omega_err", 3), ("wheel_accel", "N"),
]
CONTROLLER_GROUPS = [
    ("u_d", 3), ("u", "N"), ("u_applied", "N"), ("cmd", "N"), ("theta_hat", "N"), ("lambda", 1),
]
WHEEL_GROUPS = [
    ("Omega_meas", "N"), ("I_meas", "N"), ("Omega_device", "N"),
]

PLOT_FIGURES: Dict[str, List[str]] = {
    "error_mrp": ["sigma_e"],
    "body_rate": ["omega", "omega_d", "omega_err"],
    "lambda": ["lambda"],
    "health": ["theta_hat", "lambda"],
    "wheel_speed": ["Omega_meas", "Omega_true"],
    "wheel_accel": ["wheel_accel"],
}


def group_columns(groups, n: int) -> List[str]:
    columns = []
    for name, width in groups:
        count = n if width == "N" else width
        if count == 1:
            columns.append(name)
        else:
            columns.extend(f"{name}_{i + 1}" for i in range(count))
    return columns


def flatten(groups, n: int, values: Dict[str, Sequence[float]]) -> List[float]:
    row: List[float] = []
    for name, width in groups:
        count = n if width == "N" else width
        entries = list(values[name])
        if len(entries) != count:
            raise ValueError(f"Log group '{name}' has {len(entries)} values, expected {count}")
        row.extend(float(v) for v in entries)
    return row


def format_value(value: float) -> str:
    return repr(float(value))


class RunLog:
    """Per-control-tick rows plus a metrics summary block"""

    def __init__(self, n_wheels: int, columns: Optional[List[str]] = None):
        self.n = n_wheels
        self.columns = columns or (
            ["t"]
            + group_columns(SIM_GROUPS, n_wheels)
            + group_columns(CONTROLLER_GROUPS, n_wheels)
            + group_columns(WHEEL_GROUPS, n_wheels)
        )
        self._index = {c: i for i, c in enumerate(self.columns)}
        self.rows: List[List[float]] = []
        self.summary: Dict = {}

    def __len__(self) -> int:
        return len(self.rows)

    def append(
        self,
        t: float,
        sim: Dict[str, Sequence[float]],
        controller: Dict[str, Sequence[float]],
        wheels: Dict[str, Sequence[float]],
    ) -> None:
        if self.rows and t <= self.rows[-1][0]:
            raise ValueError(f"Log timestamps must increase ({t} after {self.rows[-1][0]})")
        self.rows.append(
            [float(t)]
            + flatten(SIM_GROUPS, self.n, sim)
            + flatten(CONTROLLER_GROUPS, self.n, controller)
            + flatten(WHEEL_GROUPS, self.n, wheels)
        )

    def column(self, name: str) -> np.ndarray:
        i = self._index[name]
        return np.array([row[i] for row in self.rows])

    def group(self, name: str) -> np.ndarray:
        """All columns of a group as a (rows × width) array"""
        if name in self._index:
            return self.column(name).reshape(-1, 1)
        cols = [c for c in self.columns if c.rsplit("_", 1)[0] == name and c.rsplit("_", 1)[-1].isdigit()]
        if not cols:
            raise KeyError(name)
        idx = [self._index[c] for c in cols]
        return np.array([[row[i] for i in idx] for row in self.rows]).reshape(len(self.rows), len(idx))

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\r\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(v) for v in row])
        return buffer.getvalue()

    def digest(self) -> str:
        return content_digest(self.to_csv_text().encode("utf-8"))

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv_text(), encoding="utf-8", newline="")
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path], n_wheels: int) -> "RunLog":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            columns = next(reader)
            log = cls(n_wheels, columns=columns)
            log.rows = [[float(v) for v in row] for row in reader]
        return log


def read_node_log(path: Union[str, Path]) -> Dict[int, Dict[str, float]]:
    """Node-local CSV keyed by tick"""
    rows: Dict[int, Dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for record in csv.DictReader(f):
            rows[int(record["tick"])] = {k: float(v) for k, v in record.items() if k != "tick"}
    return rows


def write_node_log(path: Union[str, Path], columns: List[str], rows: Iterable[List[float]]) -> Path:
    """Node-local CSV: tick, t, then the node's columns"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(["tick", "t"] + columns)
        for row in rows:
            writer.writerow([str(int(row[0]))] + [format_value(v) for v in row[1:]])
    return path


def merge_node_logs(
    n_wheels: int,
    sim_path: Union[str, Path],
    controller_path: Union[str, Path],
    wheel_path: Union[str, Path],
) -> RunLog:
    """Join the three node logs on their shared tick index"""
    sim = read_node_log(sim_path)
    ctrl = read_node_log(controller_path)
    wheels = read_node_log(wheel_path)
    log = RunLog(n_wheels)
    ticks = sorted(set(sim) & set(ctrl) & set(wheels))
    dropped = len(set(sim) | set(ctrl) | set(wheels)) - len(ticks)
    if dropped:
        logger.warning("Node log rows without a match dropped", count=dropped)
    for tick in ticks:
        merged = {**sim[tick], **ctrl[tick], **wheels[tick]}
        log.rows.append([merged["t"]] + [merged[c] for c in log.columns[1:]])
    return log


def emit_plot_data(log: RunLog, which: Union[str, Iterable[str]], out_dir: Union[str, Path]) -> List[Path]:
    """One tidy CSV per figure key: t followed by the figure's columns"""
    keys = [which] if isinstance(which, str) else list(which)
    if "all" in keys:
        keys = list(PLOT_FIGURES)
    unknown = [k for k in keys if k not in PLOT_FIGURES]
    if unknown:
        raise ValueError(f"Unknown figure key(s) {unknown}; valid options: {sorted(PLOT_FIGURES)}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for key in keys:
        columns = ["t"]
        for group in PLOT_FIGURES[key]:
            columns += [c for c in log.columns if c == group or (c.rsplit("_", 1)[0] == group and c.rsplit("_", 1)[-1].isdigit())]
        idx = [log.columns.index(c) for c in columns]
        path = out_dir / f"{key}.csv"
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\r\n")
            writer.writerow(columns)
            for row in log.rows:
                writer.writerow([format_value(row[i]) for i in idx])
        written.append(path)
        logger.info("Plot data written", figure=key, path=str(path), rows=len(log.rows))
    return written


def schema_header() -> Dict[str, int]:
    return {"run_log_schema_version": RUN_LOG_SCHEMA_VERSION}
