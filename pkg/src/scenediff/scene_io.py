"""Deterministic JSON serialization for scenes and dataset bundles.

Bundles live in a directory of five files (config, codebook, library,
scenes, instructions). Graphs, layouts, and standardization statistics are
recomputed at load time from the scenes, which keeps the stored form small
and guarantees the loaded bundle is self-consistent. All writers sort keys
and end with a newline, so equal inputs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import SceneConfig
from .datagen import Asset, AssetLibrary, DatasetBundle, pad_layout
from .graph import derive_semantic_graph, pad_graph
from .instructions import Instruction, StyleConstraint
from .quantizer import Codebook
from .relations import RelationLabel
from .scene import ObjectInstance, Scene, scene_to_layout

BUNDLE_FORMAT = "scene-bundle-v1"


def dump_json(payload, path: Path | str) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json(path: Path | str):
    return json.loads(Path(path).read_text())


def object_to_dict(obj: ObjectInstance) -> dict:
    return {
        "category": int(obj.category),
        "location": [float(v) for v in obj.location],
        "size": [float(v) for v in obj.size],
        "rotation": float(obj.rotation),
        "feature": [float(v) for v in obj.feature],
        "asset_id": obj.asset_id,
    }


def object_from_dict(data: dict) -> ObjectInstance:
    try:
        return ObjectInstance(
            category=int(data["category"]),
            location=tuple(float(v) for v in data["location"]),
            size=tuple(float(v) for v in data["size"]),
            rotation=float(data["rotation"]),
            feature=np.asarray(data["feature"], dtype=np.float64),
            asset_id=data.get("asset_id"),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed object record: {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    return {"id": scene.id, "objects": [object_to_dict(o) for o in scene.objects]}


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict) or "id" not in data or "objects" not in data:
        raise ValueError("malformed scene record: need id and objects")
    return Scene(
        id=str(data["id"]),
        objects=tuple(object_from_dict(o) for o in data["objects"]),
    )


def save_scenes(scenes, path: Path | str, *, meta: dict | None = None) -> None:
    payload = {"scenes": [scene_to_dict(s) for s in scenes]}
    if meta:
        payload["meta"] = meta
    dump_json(payload, path)


def load_scenes(path: Path | str) -> list[Scene]:
    data = load_json(path)
    if "scenes" not in data:
        raise ValueError("scene file lacks a 'scenes' list")
    return [scene_from_dict(s) for s in data["scenes"]]


def instruction_to_dict(instr: Instruction) -> dict:
    style = None
    if instr.style is not None:
        style = {
            "codes": [int(c) for c in instr.style.codes],
            "category": instr.style.category,
        }
    return {
        "triplets": [[int(s), int(r), int(o)] for s, r, o in instr.triplets],
        "style": style,
        "text": instr.text,
    }


def instruction_from_dict(data: dict) -> Instruction:
    style = None
    if data.get("style") is not None:
        raw = data["style"]
        style = StyleConstraint(
            codes=tuple(int(c) for c in raw["codes"]),
            category=raw.get("category"),
        )
    return Instruction(
        triplets=tuple(
            (int(s), RelationLabel(int(r)), int(o)) for s, r, o in data.get("triplets", ())
        ),
        style=style,
        text=str(data.get("text", "")),
    )


def config_to_dict(config: SceneConfig) -> dict:
    return {
        "format": BUNDLE_FORMAT,
        "categories": list(config.category_names),
        "k_f": config.k_f,
        "n_f": config.n_f,
        "n_max": config.n_max,
        "d": config.d,
        "style_names": list(config.style_names),
        "style_codes": [list(codes) for codes in config.style_codes],
    }


def config_from_dict(data: dict) -> SceneConfig:
    if data.get("format") != BUNDLE_FORMAT:
        raise ValueError(
            f"unsupported bundle format {data.get('format')!r}; expected {BUNDLE_FORMAT!r}"
        )
    return SceneConfig(
        category_names=tuple(data["categories"]),
        k_f=int(data["k_f"]),
        n_f=int(data["n_f"]),
        n_max=int(data["n_max"]),
        d=int(data["d"]),
        style_names=tuple(data["style_names"]),
        style_codes=tuple(tuple(int(c) for c in row) for row in data["style_codes"]),
    )


def save_bundle(bundle: DatasetBundle, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dump_json(config_to_dict(bundle.config), directory / "config.json")
    dump_json(
        {"entries": [[float(v) for v in row] for row in bundle.codebook.entries],
         "n_f": bundle.codebook.n_f},
        directory / "codebook.json",
    )
    dump_json(
        {"assets": [
            {"asset_id": a.asset_id, "category": a.category,
             "feature": [float(v) for v in a.feature],
             "size": [float(v) for v in a.size]}
            for a in bundle.library
        ]},
        directory / "library.json",
    )
    save_scenes(bundle.scenes, directory / "scenes.json")
    dump_json(
        {"instructions": [instruction_to_dict(i) for i in bundle.instructions]},
        directory / "instructions.json",
    )


def load_bundle(directory: Path | str) -> DatasetBundle:
    directory = Path(directory)
    config = config_from_dict(load_json(directory / "config.json"))
    cb = load_json(directory / "codebook.json")
    codebook = Codebook(entries=np.asarray(cb["entries"], dtype=np.float64),
                        n_f=int(cb["n_f"]))
    lib = load_json(directory / "library.json")
    library = AssetLibrary(tuple(
        Asset(asset_id=a["asset_id"], category=int(a["category"]),
              feature=np.asarray(a["feature"], dtype=np.float64),
              size=tuple(float(v) for v in a["size"]))
        for a in lib["assets"]
    ))
    scenes = tuple(load_scenes(directory / "scenes.json"))
    instrs = tuple(
        instruction_from_dict(d)
        for d in load_json(directory / "instructions.json")["instructions"]
    )
    graphs = tuple(
        pad_graph(derive_semantic_graph(s, codebook, config), config.n_max)
        for s in scenes
    )
    layouts = np.stack([pad_layout(scene_to_layout(s), config.n_max) for s in scenes])
    return DatasetBundle(
        config=config,
        scenes=scenes,
        graphs=graphs,
        layouts=layouts,
        codebook=codebook,
        library=library,
        instructions=instrs,
    )
