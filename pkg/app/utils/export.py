"""
Utility functions for writing and reading lab artifacts.
"""

import csv
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar, Union

from app.errors import ParseError, SchemaMismatch

logger = logging.getLogger(__name__)

T = TypeVar("T")


def ensure_directory(filepath: Union[str, Path]) -> None:
    """Ensure that the directory for the file exists."""
    directory = os.path.dirname(filepath)
    if directory and not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)
        logger.debug(f"Created directory: {directory}")


def dumps_record(record: Dict[str, Any]) -> str:
    """Canonical one-line JSON used by every JSONL artifact."""
    return json.dumps(record, sort_keys=True, separators=(", ", ": "))


def export_to_json(data: Union[List[Any], Dict[str, Any]], filepath: Union[str, Path],
                   pretty: bool = True) -> Path:
    """
    Export data to a JSON file.

    Args:
        data: The data to export; objects with to_dict() are converted
        filepath: The path to the output file
        pretty: Whether to format the JSON with indentation

    Returns:
        The path written
    """
    ensure_directory(filepath)
    if isinstance(data, list) and data and hasattr(data[0], "to_dict"):
        data = [item.to_dict() for item in data]
    elif hasattr(data, "to_dict"):
        data = data.to_dict()

    with open(filepath, "w") as f:
        if pretty:
            json.dump(data, f, indent=2, sort_keys=True, default=str)
        else:
            json.dump(data, f, sort_keys=True, default=str)
        f.write("\n")

    logger.info(f"Exported data to JSON file: {filepath}")
    return Path(filepath)


def write_jsonl(records: Iterable[Any], filepath: Union[str, Path], append: bool = False) -> Path:
    """Write records (dicts or objects with to_dict) one per line."""
    ensure_directory(filepath)
    count = 0
    with open(filepath, "a" if append else "w") as f:
        for record in records:
            if hasattr(record, "to_dict"):
                record = record.to_dict()
            f.write(dumps_record(record) + "\n")
            count += 1
    logger.debug(f"Wrote {count} records to {filepath}")
    return Path(filepath)


def read_jsonl(filepath: Union[str, Path], parse: Optional[Callable[[Dict[str, Any]], T]] = None,
               schema: Optional[int] = None) -> List[T]:
    """
    Read a JSONL file.

    Args:
        filepath: The file to read
        parse: Optional converter applied to each decoded record
        schema: Expected "schema" value; mismatches raise SchemaMismatch

    Returns:
        The decoded records; an empty file yields an empty list
    """
    records = []
    with open(filepath, "r") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                logger.error(f"Invalid JSON in {filepath} at line {line_no}: {e}")
                raise ParseError(f"Invalid JSON in {filepath}", line=line_no, path=str(filepath)) from e
            if schema is not None and data.get("schema") != schema:
                raise SchemaMismatch(
                    f"Expected schema {schema} in {filepath}, found {data.get('schema')}",
                    line=line_no, path=str(filepath))
            if parse is not None:
                try:
                    data = parse(data)
                except (KeyError, TypeError, ValueError) as e:
                    raise ParseError(f"Malformed record in {filepath}: {e}", line=line_no,
                                     path=str(filepath)) from e
            records.append(data)
    return records


def write_csv(rows: List[Dict[str, Any]], filepath: Union[str, Path],
              fieldnames: Optional[List[str]] = None) -> Path:
    """Write dict rows to CSV; the header follows fieldnames or the first row."""
    ensure_directory(filepath)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(filepath, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.info(f"Exported {len(rows)} rows to CSV file: {filepath}")
    return Path(filepath)


def read_csv(filepath: Union[str, Path]) -> List[Dict[str, str]]:
    with open(filepath, "r", newline="") as f:
        return list(csv.DictReader(f))
