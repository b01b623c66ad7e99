"""
Experiment documents: reading, validation and the objects they describe.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from fiber_calculus.constants import DEFAULT_CONVENTION, DEFAULT_RESOLUTIONS
from fiber_calculus.grid import BundleGrid
from flow.fan import BoundaryFan
from geometry.scene import ThermostatScene
from transport.connections import ConnectionPair, random_pair

from .constants import DEFAULT_RANDOM_RANK
from .exceptions import InvalidConfiguration, UnreadableConfiguration
from .serializers import ExperimentSerializer

logger = logging.getLogger(__name__)


def canonical_json(document: Any) -> str:
    return json.dumps(document, sort_keys=True, separators=(',', ':'))


def config_hash(document: Dict) -> str:
    return hashlib.sha256(canonical_json(document).encode('utf-8')).hexdigest()


def read_document(path) -> Dict:
    """JSON, or YAML when the suffix is .yaml / .yml."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise UnreadableConfiguration(f"Cannot read {path}: {exc}", path=str(path))
    try:
        if path.suffix.lower() in ('.yaml', '.yml'):
            document = yaml.safe_load(text)
        else:
            document = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise UnreadableConfiguration(f"Cannot parse {path}: {exc}", path=str(path))
    if not isinstance(document, dict):
        raise UnreadableConfiguration(f"{path} does not hold a mapping", path=str(path))
    return document


def validate_document(document: Dict, command: str) -> Dict:
    """
    Validate with ExperimentSerializer; all errors are reported together.

    Raises:
        InvalidConfiguration: with the serializer errors in ``context['errors']``
    """
    serializer = ExperimentSerializer(data=document, context={'command': command})
    if not serializer.is_valid():
        errors = json.loads(json.dumps(serializer.errors))
        logger.error(f"Invalid configuration for {command}: {errors}")
        raise InvalidConfiguration('The experiment configuration is invalid', errors=errors)
    return json.loads(json.dumps(serializer.validated_data))


@dataclass
class ExperimentConfig:
    command: str
    document: Dict
    config_hash: str
    seed: int

    def block(self, name: str) -> Dict:
        return self.document.get(name) or {}

    @property
    def discretization(self) -> Dict:
        return self.block('discretization')

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def scene(self) -> ThermostatScene:
        return ThermostatScene.from_config(self.block('scene'))

    def pair(self, rng: Optional[np.random.Generator] = None, default_rank: int = DEFAULT_RANDOM_RANK) -> ConnectionPair:
        """The pair block; a random unitary pair when it asks for one, the zero pair when it is absent."""
        block = self.block('pair')
        radius = float(self.block('scene').get('R', 1.0))
        if 'random' in block:
            spec = block['random']
            rng = rng if rng is not None else self.rng()
            return random_pair(rng, spec['n'], spec['unitary'], spec['degree'], spec['amplitude'], spec['higgs'])
        if not block:
            return ConnectionPair.zero(default_rank)
        return ConnectionPair.from_config(block, radius)

    def fan(self, scene: ThermostatScene) -> BoundaryFan:
        block = self.discretization.get('fan') or {}
        return BoundaryFan.build(scene, block.get('boundary_points', 64), block.get('angles', 64))

    def grid(self, scene: ThermostatScene) -> BundleGrid:
        block = self.discretization.get('grid') or {}
        return BundleGrid(scene, block.get('n_x', 96), block.get('n_theta', 64),
                          block.get('convention', DEFAULT_CONVENTION))

    @property
    def resolutions(self) -> List[Tuple[int, int]]:
        value = self.discretization.get('resolutions')
        return [tuple(r) for r in value] if value else list(DEFAULT_RESOLUTIONS)

    @property
    def t_max(self) -> Optional[float]:
        return self.discretization.get('t_max')

    @property
    def tolerance(self) -> float:
        return float(self.discretization.get('tolerance', 1e-5))

    def cache_key(self, *parts: Any) -> str:
        """Hash of the blocks an assembled matrix depends on."""
        payload = [self.block('scene'), self.block('pair'), self.discretization.get('fan') or {}, self.seed, list(parts)]
        return config_hash({'key': payload})


def load_config(path, command: str, seed: Optional[int] = None) -> ExperimentConfig:
    """
    Read and validate an experiment document; ``seed`` overrides the document.

    Raises:
        UnreadableConfiguration, InvalidConfiguration
    """
    document = read_document(path)
    if seed is not None:
        document['seed'] = seed
    validated = validate_document(document, command)
    digest = config_hash(validated)
    logger.info(f"Loaded {command} configuration {digest[:12]} (seed {validated['seed']})")
    return ExperimentConfig(command=command, document=validated, config_hash=digest, seed=int(validated['seed']))
