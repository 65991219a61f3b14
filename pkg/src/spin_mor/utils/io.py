"""
Artifact I/O: CSV tables, JSON documents, GK state records and run manifests.

Floats are written with 17 significant digits and a '.' decimal point so
that a rerun from the same manifest reproduces the files byte for byte.
"""

import csv
import json
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import scipy

from ..core.gk_manifold import GKState

FLOAT_FORMAT = '.17g'


def format_value(value: Any) -> str:
    """
    Text form of one CSV cell.

    Example:
        >>> format_value(0.1)
        '0.10000000000000001'
        >>> format_value(True)
        'true'
    """
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if isinstance(value, (complex, np.complexfloating)):
        return f"{format(value.real, FLOAT_FORMAT)}{format(value.imag, '+' + FLOAT_FORMAT)}j"
    if value is None:
        return ''
    return str(value)


def write_csv(path, rows: Sequence[Mapping[str, Any]], fieldnames: Optional[List[str]] = None) -> Path:
    """
    Write rows of a table to CSV.

    Args:
        path: Output file
        rows: Mappings from column name to value
        fieldnames: Column order (default: keys of the first row)

    Returns:
        Path written

    Raises:
        ValueError: If there are no rows and no fieldnames, or a row has unknown keys
    """
    path = Path(path)
    if fieldnames is None:
        if not rows:
            raise ValueError(f"Cannot infer CSV columns for empty table {path}")
        fieldnames = list(rows[0].keys())

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            unknown = set(row) - set(fieldnames)
            if unknown:
                raise ValueError(f"Row has columns {sorted(unknown)} outside {fieldnames}")
            writer.writerow({k: format_value(row.get(k)) for k in fieldnames})
    return path


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays (complex as [re, im]) to JSON types."""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    return value


def write_json(path, data: Any) -> Path:
    """Write a JSON document with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def read_json(path) -> Any:
    """
    Read a JSON document.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the file is not valid JSON
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"JSON file not found: {path}")
    with open(path, encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in {path}: {e}") from e


def write_gk_record(path, state: GKState) -> Path:
    return write_json(path, state.to_record())


def read_gk_record(path) -> GKState:
    return GKState.from_record(read_json(path))


def run_manifest(command: str, seed: int, parameters: Mapping[str, Any], outputs: Iterable[str] = ()) -> Dict:
    """
    Manifest describing a run well enough to repeat it.

    Example:
        >>> run_manifest('rip', 0, {'sparsity': 3})['command']
        'rip'
    """
    from .. import __version__

    return {
        'command': command,
        'seed': int(seed),
        'parameters': to_jsonable(dict(parameters)),
        'outputs': sorted(outputs),
        'versions': {
            'spin_mor': __version__,
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'python': platform.python_version(),
        },
    }
