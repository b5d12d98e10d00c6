"""CSV reports with a status trailer, MDP sidecar files and SVG charts."""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from treemax.core.defaults import CliDefaults

logger = logging.getLogger(__name__)


def status_line(error: Optional[BaseException] = None) -> str:
    if error is None:
        return f"{CliDefaults.STATUS_PREFIX}ok\n"
    message = " ".join(str(error).split())
    return f"{CliDefaults.STATUS_PREFIX}error {type(error).__name__}: {message}\n"


def write_report_csv(file_path: str | Path,
                     rows: Iterable[dict],
                     columns: List[str],
                     error: Optional[BaseException] = None) -> None:
    """
    Write rows with a header and a final `# status=ok|error` comment line.
    Missing and NaN values are written as empty fields.
    """
    frame = pd.DataFrame(list(rows), columns=columns)
    with open(file_path, "w", newline="") as csv_file:
        frame.to_csv(csv_file, index=False, na_rep="", lineterminator="\n")
        csv_file.write(status_line(error))
    logger.info("wrote %d rows to %s", len(frame), file_path)


def read_report_csv(file_path: str | Path) -> Tuple[pd.DataFrame, str]:
    """
    Returns:
        tuple: (data rows, status text after `# status=`).
    """
    with open(file_path, "r") as csv_file:
        lines = csv_file.read().splitlines()
    status = ""
    if lines and lines[-1].startswith(CliDefaults.STATUS_PREFIX):
        status = lines[-1][len(CliDefaults.STATUS_PREFIX):]
    frame = pd.read_csv(file_path, comment="#")
    return frame, status


def sidecar_path(mdp_path: str | Path) -> Path:
    return Path(f"{mdp_path}{CliDefaults.SIDECAR_SUFFIX}")


def write_sidecar(mdp_path: str | Path, metadata: dict) -> Path:
    target = sidecar_path(mdp_path)
    with open(target, "w") as json_file:
        json.dump(metadata, json_file, indent=1, sort_keys=True)
        json_file.write("\n")
    return target


def read_sidecar(mdp_path: str | Path) -> dict:
    """Sidecar metadata of an MDP file, or {} when there is none."""
    target = sidecar_path(mdp_path)
    if not target.exists():
        return {}
    with open(target, "r") as json_file:
        return json.load(json_file)


def _positive(values: np.ndarray) -> np.ndarray:
    # log axis: zeros and NaNs are left out of the line
    values = np.array(values, dtype=float)
    values[~(values > 0)] = np.nan
    return values


def write_sweep_svg(file_path: str | Path, frame: pd.DataFrame) -> None:
    """
    Log-y chart of the seed-averaged normalized variance (solid) and
    normalized model (dashed) against depth, one pair of lines per regime.
    """
    matplotlib.rcParams["svg.hashsalt"] = CliDefaults.SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(6, 4.5))
    averaged = (frame.groupby(["regime", "depth"], sort=True)[["normalized_variance", "normalized_model"]]
                .mean()
                .reset_index())

    for index, (regime, group) in enumerate(averaged.groupby("regime", sort=True)):
        color = f"C{index}"
        ax.plot(group["depth"], _positive(group["normalized_variance"]), color=color,
                marker="o", label=f"{regime} exact")
        ax.plot(group["depth"], _positive(group["normalized_model"]), color=color,
                linestyle="--", label=f"{regime} model")

    ax.set_yscale("log")
    ax.set_xlabel("depth d")
    ax.set_ylabel("normalized PG variance")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(file_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("wrote chart to %s", file_path)
