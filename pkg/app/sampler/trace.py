"""
Trace persistence: a JSONL file of denoising steps plus a binary sidecar
holding attention tensors, referenced by byte offset.
"""

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.errors import NoAttentionInTrace, ParseError, SchemaMismatch
from app.models.layout import LayoutSequence
from app.sampler.generate import DenoiseTrace, StepRecord
from app.utils.export import dumps_record, ensure_directory

logger = logging.getLogger(__name__)

TRACE_SCHEMA = 1
ATTENTION_DTYPE = np.float32


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".bin")


def write_trace(trace: DenoiseTrace, path: Union[str, Path], **header) -> Path:
    """Write one header line, then one line per step; attention goes to <path>.bin."""
    ensure_directory(path)
    blob = sidecar_path(path)
    offset = 0
    with open(path, "w") as f, open(blob, "wb") as sidecar:
        f.write(dumps_record({"kind": "header", "schema": TRACE_SCHEMA,
                              "layout": trace.layout.to_dict(), **header}) + "\n")
        for record in trace.steps:
            line = {
                "kind": "step",
                "step": record.step,
                "positions": record.positions,
                "tokens": record.tokens,
                "confidences": record.confidences,
                "attention": None,
            }
            maps = trace.attention.get(record.step)
            if maps is not None:
                data = np.ascontiguousarray(maps, dtype=ATTENTION_DTYPE)
                sidecar.write(data.tobytes())
                line["attention"] = {"offset": offset, "shape": list(data.shape),
                                     "dtype": np.dtype(ATTENTION_DTYPE).name}
                offset += data.nbytes
            f.write(dumps_record(line) + "\n")
    logger.debug(f"Wrote trace with {len(trace.steps)} steps to {path}")
    return Path(path)


def read_trace(path: Union[str, Path], load_attention: bool = True) -> DenoiseTrace:
    blob = sidecar_path(path)
    with open(path, "r") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ParseError(f"Empty trace file {path}", line=1, path=str(path))
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid trace header in {path}", line=1, path=str(path)) from e
    if header.get("schema") != TRACE_SCHEMA:
        raise SchemaMismatch(f"Trace schema {header.get('schema')} is not {TRACE_SCHEMA}", path=str(path))

    trace = DenoiseTrace(layout=LayoutSequence.from_dict(header["layout"]))
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"Invalid trace line in {path}", line=line_no, path=str(path)) from e
        trace.steps.append(StepRecord(step=data["step"], positions=data["positions"],
                                      tokens=data["tokens"], confidences=data["confidences"]))
        ref = data.get("attention")
        if ref and load_attention:
            count = int(np.prod(ref["shape"]))
            maps = np.fromfile(blob, dtype=ref["dtype"], count=count, offset=ref["offset"])
            trace.attention[data["step"]] = maps.reshape(ref["shape"]).astype(np.float64)
    return trace


def require_attention(trace: DenoiseTrace) -> None:
    if not trace.attention:
        raise NoAttentionInTrace("trace was recorded without attention capture")
