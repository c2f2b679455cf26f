"""Serialization: versioned JSON for construction results, OBJ export of
polygon geometry, CSV/JSON emitters for tables and reports.

JSON uses the shortest round-trip float representation, so identical runs
serialize to byte-identical documents.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .engine import ConstructionResult

CONSTRUCTION_FORMAT = "stit-construction/1"
TABLE_FORMAT = "stit-tables/1"
REPORT_FORMAT = "stit-verification/1"


def _point(p) -> list:
    return [float(x) for x in p]


def construction_to_dict(result: ConstructionResult,
                         include_cells: bool = True) -> dict:
    doc = {
        "format": CONSTRUCTION_FORMAT,
        "seed": int(result.seed),
        "stream": int(result.stream),
        "t": float(result.t),
        "window_side": float(result.window_side),
        "direction_dist": result.direction_name,
        "n_cells": len(result.final_cells),
        "n_polygons": len(result.polygons),
        "polygons": [
            {
                "id": poly.id,
                "birth_time": float(poly.birth_time),
                "parent_cell": poly.parent_cell,
                "plane": {"normal": _point(poly.plane.normal),
                          "offset": float(poly.plane.offset)},
                "loop": [_point(p) for p in poly.loop],
                "sides": [
                    {"a": _point(s.a), "b": _point(s.b),
                     "carrier": list(s.carrier.key())}
                    for s in poly.sides
                ],
            }
            for poly in result.polygons
        ],
    }
    if include_cells:
        doc["cells"] = [
            {
                "vertices": [_point(v) for v in cell.vertices],
                "facets": [[int(i) for i in loop] for loop in cell.facets],
                "tags": [list(t.key()) for t in cell.tags],
            }
            for cell in result.final_cells
        ]
    return doc


def write_construction_json(result: ConstructionResult, path,
                            include_cells: bool = True) -> None:
    with open(path, "w") as fh:
        json.dump(construction_to_dict(result, include_cells), fh,
                  separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def write_obj(result: ConstructionResult, path) -> None:
    """Polygon loops as an OBJ face soup (1-based vertex indices)."""
    with open(path, "w") as fh:
        fh.write(f"# STIT construction seed={result.seed} stream={result.stream}"
                 f" t={result.t} cells={len(result.final_cells)}\n")
        offset = 1
        for poly in result.polygons:
            fh.write(f"o polygon_{poly.id}\n")
            for p in poly.loop:
                fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            indices = " ".join(str(offset + i) for i in range(len(poly.loop)))
            fh.write(f"f {indices}\n")
            offset += len(poly.loop)


def _config_header(config: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating,)) else v)
            for k, v in config.items()}


def write_table_json(rows: list[dict], path, config: dict) -> None:
    doc = {"format": TABLE_FORMAT, "config": _config_header(config),
           "rows": rows}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_table_csv(rows: list[dict], path, config: dict,
                    columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        for key in sorted(config):
            fh.write(f"# {key} = {config[key]}\n")
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
