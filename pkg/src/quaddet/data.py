"""Annotation files, patch splitting, geometric augmentation and patch merging."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidQuad, ParseError, UnknownClass
from .geometry import Quad, canonicalize, repair_quad

DOTA_CLASSES = (
    "plane", "baseball-diamond", "bridge", "ground-track-field", "small-vehicle",
    "large-vehicle", "ship", "tennis-court", "basketball-court", "storage-tank",
    "soccer-ball-field", "roundabout", "harbor", "swimming-pool", "helicopter",
)

TRANSFORMS = ("identity", "hflip", "vflip", "rot90", "rot180", "rot270")


@dataclass(frozen=True)
class AnnotatedObject:
    quad: Quad
    class_name: str
    difficult: bool = False


@dataclass(frozen=True)
class AnnotationSet:
    image_id: str
    objects: tuple = ()
    image_size: Optional[tuple] = None   # (width, height)
    categories: tuple = DOTA_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "categories", tuple(self.categories))
        for o in self.objects:
            if o.class_name not in self.categories:
                raise UnknownClass(f"unknown class {o.class_name!r}")

    def class_id(self, name: str) -> int:
        return self.categories.index(name)

    def __len__(self):
        return len(self.objects)


# -- annotation text format --------------------------------------------------

def parse_annotations(text: str, image_id: str = "", categories=DOTA_CLASSES,
                      image_size=None) -> AnnotationSet:
    """Parse ``x1 y1 ... x4 y4 class difficult`` lines.

    ``imagesource:`` and ``gsd:`` header lines and blank lines are skipped.
    Slightly non-convex quads are replaced by their 4-vertex convex hull.
    """
    objects = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("imagesource", "gsd")):
            continue
        parts = line.split()
        if len(parts) not in (9, 10):
            raise ParseError(f"expected 8 coordinates, class and difficulty; got {len(parts)} fields",
                             lineno)
        coords = []
        for col, tok in enumerate(parts[:8], start=1):
            try:
                coords.append(float(tok))
            except ValueError:
                raise ParseError(f"malformed coordinate {tok!r}", lineno, col) from None
        name = parts[8]
        if name not in categories:
            raise UnknownClass(f"unknown class {name!r}", lineno, 9)
        difficult = False
        if len(parts) == 10:
            if parts[9] not in ("0", "1"):
                raise ParseError(f"difficulty must be 0 or 1, got {parts[9]!r}", lineno, 10)
            difficult = parts[9] == "1"
        try:
            quad = repair_quad(list(zip(coords[0::2], coords[1::2])))
        except InvalidQuad as exc:
            raise ParseError(f"invalid quadrilateral: {exc}", lineno) from None
        objects.append(AnnotatedObject(quad, name, difficult))
    return AnnotationSet(image_id, tuple(objects), image_size, tuple(categories))


def format_number(v: float) -> str:
    """Shortest text that parses back to the same float; integral values without '.0'."""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_annotations(annotations: AnnotationSet) -> str:
    lines = []
    for o in annotations.objects:
        coords = " ".join(format_number(v) for v in o.quad.flat())
        lines.append(f"{coords} {o.class_name} {int(o.difficult)}")
    return "".join(line + "\n" for line in lines)


# -- patching ---------------------------------------------------------------

@dataclass(frozen=True)
class PatchSpec:
    x: int
    y: int
    size: int = 1024
    overlap: int = 200
    width: int = 1024
    height: int = 1024

    def __post_init__(self):
        if not 0 <= self.overlap < self.size:
            raise ValueError(f"need 0 <= overlap < size, got overlap={self.overlap} size={self.size}")

    @property
    def origin(self):
        return (self.x, self.y)

    def patch_id(self, image_id: str) -> str:
        return f"{image_id}__{self.x}__{self.y}"


def _origins(extent: int, size: int, stride: int) -> list:
    if extent <= size:
        return [0]
    out = [0]
    while out[-1] + size < extent:
        nxt = out[-1] + stride
        if nxt + size >= extent:
            nxt = extent - size
        out.append(nxt)
    return out


def split_patches(image_w: int, image_h: int, size: int = 1024, overlap: int = 200) -> list:
    """Overlapping fixed-size tiles; the last tile per axis is shifted back to end at the border."""
    if size <= overlap:
        raise ValueError(f"patch size {size} must exceed overlap {overlap}")
    stride = size - overlap
    xs = _origins(image_w, size, stride)
    ys = _origins(image_h, size, stride)
    w, h = min(size, image_w), min(size, image_h)
    return [PatchSpec(x, y, size, overlap, w, h) for y in ys for x in xs]


def remap_annotations(annotations: AnnotationSet, patch: PatchSpec, patch_id: Optional[str] = None) -> AnnotationSet:
    """Objects whose centroid falls inside the patch, translated to patch coordinates (unclipped)."""
    kept = []
    for o in annotations.objects:
        c = o.quad.centroid()
        if patch.x <= c.x <= patch.x + patch.width and patch.y <= c.y <= patch.y + patch.height:
            kept.append(replace(o, quad=o.quad.translate(-patch.x, -patch.y)))
    return AnnotationSet(patch_id or patch.patch_id(annotations.image_id), tuple(kept),
                         (patch.width, patch.height), annotations.categories)


# -- augmentation -------------------------------------------------------------

def transform_point(transform: str, x: float, y: float, width: float, height: float):
    """Exact continuous-coordinate map of an image transform (pixel edges at integers)."""
    if transform == "identity":
        return x, y
    if transform == "hflip":
        return width - x, y
    if transform == "vflip":
        return x, height - y
    if transform == "rot90":      # counter-clockwise on screen, matches np.rot90
        return y, width - x
    if transform == "rot180":
        return width - x, height - y
    if transform == "rot270":
        return height - y, x
    raise ValueError(f"unknown transform {transform!r}")


def transformed_size(transform: str, width, height):
    return (height, width) if transform in ("rot90", "rot270") else (width, height)


def augment(transform: str, annotations: AnnotationSet) -> AnnotationSet:
    if annotations.image_size is None:
        raise ValueError("augment needs the image size")
    w, h = annotations.image_size
    objs = []
    for o in annotations.objects:
        pts = [transform_point(transform, p.x, p.y, w, h) for p in o.quad.vertices]
        objs.append(replace(o, quad=canonicalize(pts)))
    return AnnotationSet(annotations.image_id, tuple(objs), transformed_size(transform, w, h),
                         annotations.categories)


def augment_image(transform: str, image: np.ndarray) -> np.ndarray:
    """Apply the same transform to an (H, W, ...) raster."""
    if transform == "identity":
        return image
    if transform == "hflip":
        return image[:, ::-1].copy()
    if transform == "vflip":
        return image[::-1].copy()
    if transform == "rot90":
        return np.rot90(image, 1).copy()
    if transform == "rot180":
        return np.rot90(image, 2).copy()
    if transform == "rot270":
        return np.rot90(image, 3).copy()
    raise ValueError(f"unknown transform {transform!r}")


def merge_patch_detections(per_patch: list, patches: list, t_nms: float = 0.1) -> list:
    """Translate each patch's detections to image space and run per-class rotated NMS."""
    from .postprocess import rotated_nms

    merged = []
    for dets, patch in zip(per_patch, patches):
        for d in dets:
            merged.append(replace(d, quad=d.quad.translate(patch.x, patch.y)))
    return rotated_nms(merged, t_nms)


# -- patch manifest -------------------------------------------------------------

def write_manifest(rows) -> str:
    """Rows of (image_id, PatchSpec) as ``image_id x y size`` lines."""
    return "".join(f"{image_id} {p.x} {p.y} {p.size}\n" for image_id, p in rows)


def read_manifest(text: str, image_sizes: Optional[dict] = None, overlap: int = 200) -> list:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 'image_id x y size', got {len(parts)} fields", lineno)
        try:
            x, y, size = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise ParseError("non-integer patch origin or size", lineno) from None
        w = h = size
        if image_sizes and parts[0] in image_sizes:
            iw, ih = image_sizes[parts[0]]
            w, h = min(size, iw - x), min(size, ih - y)
        rows.append((parts[0], PatchSpec(x, y, size, min(overlap, size - 1), w, h)))
    return rows
