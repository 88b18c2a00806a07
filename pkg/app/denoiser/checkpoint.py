"""
Named-tensor checkpoints: one .npz archive with a JSON header entry.
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from app.errors import ParseError, SchemaMismatch
from app.denoiser.model import Params, check_params
from app.models.config import ModelConfig
from app.utils.export import ensure_directory

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
HEADER_KEY = "__header__"


def save_checkpoint(path: Union[str, Path], params: Params, config: ModelConfig,
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write params plus a header carrying the model config and schema version."""
    ensure_directory(path)
    header = {"schema": CHECKPOINT_SCHEMA, "model": asdict(config)}
    if extra:
        header.update(extra)
    arrays = {name: np.asarray(value, dtype=np.float64) for name, value in params.items()}
    arrays[HEADER_KEY] = np.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"Saved checkpoint with {len(params)} tensors to {path}")
    return Path(path)


def load_checkpoint(path: Union[str, Path]) -> Tuple[Params, ModelConfig, Dict[str, Any]]:
    """Read a checkpoint back; the header's config is validated against the tensors."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            if HEADER_KEY not in archive.files:
                raise ParseError(f"Checkpoint {path} has no header", line=0, path=str(path))
            header = json.loads(str(archive[HEADER_KEY]))
            params = {name: archive[name].astype(np.float64)
                      for name in archive.files if name != HEADER_KEY}
    except (OSError, ValueError) as e:
        logger.error(f"Could not read checkpoint {path}: {e}")
        raise ParseError(f"Could not read checkpoint {path}", line=0, path=str(path)) from e

    if header.get("schema") != CHECKPOINT_SCHEMA:
        raise SchemaMismatch(f"Checkpoint schema {header.get('schema')} is not {CHECKPOINT_SCHEMA}",
                             path=str(path))
    config = ModelConfig(**header["model"])
    check_params(params, config)
    logger.debug(f"Loaded checkpoint {path} ({config.layers} layers, d_model={config.d_model})")
    return params, config, header
