"""
Report files: versioned JSON envelopes and CSV tables.

``results`` holds only deterministic values; the timestamp lives in
``metadata`` so repeated runs give identical payloads.
"""
import csv
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from rest_framework.utils.encoders import JSONEncoder

from thermostat_lab import __version__

from .config import ExperimentConfig
from .constants import CSV_FLOAT_FORMAT, SCHEMA_VERSION

logger = logging.getLogger(__name__)


def format_cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    try:
        return CSV_FLOAT_FORMAT % float(value)
    except (TypeError, ValueError):
        return str(value)


def envelope(config: ExperimentConfig, results: Dict) -> Dict:
    return {
        'schema_version': SCHEMA_VERSION,
        'command': config.command,
        'config_hash': config.config_hash,
        'seed': config.seed,
        'code_version': __version__,
        'results': results,
        'metadata': {'timestamp': datetime.now(timezone.utc).isoformat()},
    }


class ReportWriter:
    """Writes the artifacts of one command run into ``out_dir``."""

    def __init__(self, out_dir, config: ExperimentConfig):
        self.out_dir = Path(out_dir)
        self.config = config
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        os.makedirs(self.out_dir, exist_ok=True)
        return self.out_dir / name

    def json(self, name: str, results: Dict) -> Path:
        path = self._path(name)
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(envelope(self.config, results), handle, cls=JSONEncoder, indent=2, sort_keys=True)
            handle.write('\n')
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self._path(name)
        with open(path, 'w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path
