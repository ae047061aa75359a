"""
File artifacts for speckit.
Spectrum files, error-curve and envelope tables, YAML reports and file hashes.
"""

import hashlib
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd
import yaml

from ..core.envelope_fit import ErrorCurve
from ..core.exceptions import ArtifactError, SpeckitException, SpectrumFormatError
from ..core.spectral_model import Spectrum, SpectrumKind, WavelengthGrid

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.12g"
SPECTRUM_HEADER = "wavelength_nm, intensity"
CURVE_COLUMNS = ["log10_alpha", "sigma_rel", "curve_id"]

# Relative spread of the steps accepted as a uniform grid (12-digit text).
UNIFORM_RTOL = 1e-6


def write_spectrum(path: PathLike, spectrum: Spectrum) -> Path:
    """Two-column text file: wavelength_nm, intensity at 12 significant digits."""
    path = Path(path)
    table = np.column_stack([spectrum.wavelengths, spectrum.values])
    try:
        np.savetxt(
            path,
            table,
            fmt=FLOAT_FORMAT,
            delimiter=", ",
            header=f"{SPECTRUM_HEADER}\nkind: {spectrum.kind.value}",
            comments="# ",
        )
    except OSError as e:
        raise ArtifactError(f"cannot write spectrum {path}: {str(e)}")
    return path


def read_spectrum(path: PathLike, kind: SpectrumKind = SpectrumKind.MEASURED) -> Spectrum:
    """
    Read a spectrum file.

    Columns may be comma- or whitespace-separated; ``#`` lines are ignored. Wavelengths
    must be strictly increasing and uniformly spaced.

    Raises:
        ArtifactError: If the file cannot be read
        SpectrumFormatError: If the content is not a valid spectrum
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"spectrum file {path} does not exist")
    try:
        frame = pd.read_csv(path, sep=r"[,\s]+", comment="#", header=None, engine="python")
    except pd.errors.EmptyDataError:
        raise SpectrumFormatError(f"{path}: no data rows")
    except (OSError, pd.errors.ParserError) as e:
        raise SpectrumFormatError(f"{path}: cannot parse spectrum: {str(e)}")

    frame = frame.dropna(axis=1, how="all")
    if frame.shape[1] != 2:
        raise SpectrumFormatError(f"{path}: expected 2 columns, found {frame.shape[1]}")
    try:
        data = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise SpectrumFormatError(f"{path}: non-numeric entry: {str(e)}")
    if not np.all(np.isfinite(data)):
        raise SpectrumFormatError(f"{path}: missing or non-finite values")

    wavelengths, values = data[:, 0], data[:, 1]
    if wavelengths.size < 2:
        raise SpectrumFormatError(f"{path}: a spectrum needs at least 2 nodes")
    steps = np.diff(wavelengths)
    if np.any(steps <= 0):
        raise SpectrumFormatError(f"{path}: wavelengths must be strictly increasing")
    step = (wavelengths[-1] - wavelengths[0]) / (wavelengths.size - 1)
    if np.max(np.abs(steps - step)) > UNIFORM_RTOL * step:
        raise SpectrumFormatError(f"{path}: wavelengths are not uniformly spaced")

    grid = WavelengthGrid(float(wavelengths[0]), float(step), int(wavelengths.size))
    return Spectrum(grid, values, kind, {"source": str(path)})


def curves_frame(curves: Sequence[ErrorCurve]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({
            "log10_alpha": curve.log10_alphas,
            "sigma_rel": curve.sigmas,
            "curve_id": str(curve.meta.get("curve_id", f"curve{i}")),
        })
        for i, curve in enumerate(curves)
    ]
    return pd.concat(frames, ignore_index=True)[CURVE_COLUMNS]


def write_curves(path: PathLike, curves: Sequence[ErrorCurve]) -> Path:
    """Long table with one row per (curve, alpha)."""
    return write_table(path, curves_frame(curves))


def read_curves(path: PathLike) -> List[ErrorCurve]:
    """Curves in file order, keyed by ``curve_id``."""
    frame = read_table(path)
    missing = [c for c in CURVE_COLUMNS if c not in frame.columns]
    if missing:
        raise SpectrumFormatError(f"{path}: missing column(s) {', '.join(missing)}")
    curves = []
    try:
        for curve_id, group in frame.groupby("curve_id", sort=False):
            curves.append(
                ErrorCurve(
                    group["log10_alpha"].to_numpy(dtype=float),
                    group["sigma_rel"].to_numpy(dtype=float),
                    {"curve_id": str(curve_id)},
                )
            )
    except SpeckitException as e:
        raise SpectrumFormatError(f"{path}: invalid curve: {str(e)}")
    return curves


def write_table(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise ArtifactError(f"cannot write table {path}: {str(e)}")
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"table {path} does not exist")
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SpectrumFormatError(f"{path}: cannot parse table: {str(e)}")


def write_yaml(path: PathLike, data: Dict[str, Any]) -> Path:
    path = Path(path)
    try:
        with path.open("w") as handle:
            yaml.safe_dump(_plain(data), handle, sort_keys=False)
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {str(e)}")
    return path


def read_yaml(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"{path} does not exist")
    try:
        with path.open() as handle:
            data = yaml.safe_load(handle)
    except (OSError, yaml.YAMLError) as e:
        raise ArtifactError(f"cannot read {path}: {str(e)}")
    if not isinstance(data, dict):
        raise ArtifactError(f"{path} does not contain a mapping")
    return data


def _plain(value: Any) -> Any:
    """Convert numpy scalars and containers into YAML-safe builtins."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
