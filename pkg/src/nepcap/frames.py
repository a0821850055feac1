"""Frame sampling, frame extraction, per-frame CNN features and the feature cache."""

import hashlib
import os
import struct
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote

import numpy as np

from .errors import CacheMissError, CorruptCacheError, DecodeError, EmptyVideoError, UnknownBackboneError

NUM_FRAMES = 30
FRAME_SIZE = (224, 224)
FEATURE_MAGIC = b"NEPCAPFEAT\x00\x00"
FEATURE_VERSION = 1
FEATURE_EXT = ".feat"
VIDEO_EXTS = (".avi", ".mp4", ".mkv", ".mov", ".webm")
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


def sample_frame_indices(total_frames, k=NUM_FRAMES):
    """Endpoint-inclusive rounded linspace: ``round(i * (total - 1) / (k - 1))``.

    Short videos simply repeat frames.  Rounding is half-to-even, computed in
    exact integer arithmetic.
    """
    if total_frames < 1:
        raise EmptyVideoError(f"video has {total_frames} frames")
    if k == 1:
        return [0]
    span, den = total_frames - 1, k - 1
    out = []
    for i in range(k):
        q, r = divmod(i * span, den)
        if 2 * r > den or (2 * r == den and q % 2 == 1):
            q += 1
        out.append(q)
    return out


# -- frame sources ---------------------------------------------------------------


class ArrayVideo:
    """In-memory frame source over an ``(N, H, W, 3)`` uint8 RGB array."""

    def __init__(self, video_id, frames):
        self.video_id = video_id
        self.frames = np.asarray(frames)

    def __len__(self):
        return len(self.frames)

    def read_many(self, indices):
        return [self.frames[i] for i in indices]


class ImageDirVideo:
    """A directory of image files, one frame per file, in sorted filename order."""

    def __init__(self, video_id, path):
        self.video_id = video_id
        self.files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in IMAGE_EXTS)

    def __len__(self):
        return len(self.files)

    def read_many(self, indices):
        import cv2

        out = []
        for i in indices:
            img = cv2.imread(str(self.files[i]), cv2.IMREAD_COLOR)
            if img is None:
                raise DecodeError(self.video_id, f"unreadable frame {self.files[i].name}")
            out.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
        return out


class OpenCVVideo:
    """Video file decoded sequentially with OpenCV."""

    def __init__(self, video_id, path):
        import cv2

        self.video_id = video_id
        self.path = str(path)
        cap = cv2.VideoCapture(self.path)
        if not cap.isOpened():
            raise DecodeError(video_id, f"cannot open {self.path}")
        self._length = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        cap.release()

    def __len__(self):
        return self._length

    def read_many(self, indices):
        import cv2

        wanted = sorted(set(indices))
        got = {}
        cap = cv2.VideoCapture(self.path)
        try:
            pos = 0
            for idx in wanted:
                while pos <= idx:
                    if not cap.grab():
                        raise DecodeError(self.video_id, f"stream ended before frame {idx}")
                    pos += 1
                ok, frame = cap.retrieve()
                if not ok:
                    raise DecodeError(self.video_id, f"cannot decode frame {idx}")
                got[idx] = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
        finally:
            cap.release()
        return [got[i] for i in indices]


def open_video(video_id, path):
    """Pick a frame source for ``path`` (video file or directory of images)."""
    path = Path(path)
    if path.is_dir():
        return ImageDirVideo(video_id, path)
    return OpenCVVideo(video_id, path)


def find_videos(root):
    """Map video id (file stem or directory name) to its path under ``root``."""
    found = {}
    for p in sorted(Path(root).iterdir()):
        if p.is_dir() or p.suffix.lower() in VIDEO_EXTS:
            found[p.stem if p.is_file() else p.name] = p
    return found


# -- frame stacks ------------------------------------------------------------------


@dataclass
class FrameStack:
    video_id: str
    frames: np.ndarray

    def __post_init__(self):
        f = self.frames
        if f.dtype != np.uint8 or f.ndim != 4 or f.shape[1:] != (*FRAME_SIZE, 3):
            raise ValueError(f"frames must be uint8 (N, 224, 224, 3), got {f.dtype} {f.shape}")
        if len(f) != NUM_FRAMES:
            raise ValueError(f"expected {NUM_FRAMES} frames, got {len(f)}")


def _resize(frame):
    if frame.shape[:2] == FRAME_SIZE:
        return frame
    import cv2

    return cv2.resize(frame, FRAME_SIZE[::-1], interpolation=cv2.INTER_LINEAR)


def extract_frames(video, indices=None):
    """Read ``indices`` (default: evenly sampled) and resize to 224x224 RGB."""
    if indices is None:
        indices = sample_frame_indices(len(video))
    try:
        raw = video.read_many(indices)
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(video.video_id, exc) from exc
    frames = []
    for idx, frame in zip(indices, raw):
        frame = np.asarray(frame)
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise DecodeError(video.video_id, f"frame {idx} has shape {frame.shape}")
        frames.append(_resize(frame.astype(np.uint8, copy=False)))
    return FrameStack(video.video_id, np.stack(frames))


# -- backbones ---------------------------------------------------------------------


@dataclass
class FeatureTensor:
    video_id: str
    backbone: str
    features: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise ValueError(f"non-finite features for video {self.video_id!r}")

    @property
    def dim(self):
        return self.features.shape[1]


class Backbone:
    """Maps a FrameStack to one ``dim``-wide vector per frame."""

    name = None
    dim = None

    def embed(self, frames):
        raise NotImplementedError

    def apply(self, stack):
        feats = np.asarray(self.embed(stack), dtype=np.float32)
        if feats.shape != (len(stack.frames), self.dim):
            raise ValueError(f"{self.name} produced {feats.shape}, expected ({len(stack.frames)}, {self.dim})")
        return FeatureTensor(stack.video_id, self.name, feats)


class SyntheticBackbone(Backbone):
    """Deterministic stand-in: SHAKE-256 of each frame's raw bytes, spread over ``dim`` floats in [-1, 1].

    No pixel normalisation is applied.  Row ``i`` depends on frame ``i`` only.
    """

    name = "synthetic"

    def __init__(self, dim=1280):
        self.dim = dim

    def embed(self, stack):
        rows = []
        for frame in stack.frames:
            digest = hashlib.shake_256(np.ascontiguousarray(frame).tobytes()).digest(2 * self.dim)
            rows.append(np.frombuffer(digest, dtype="<u2").astype(np.float32) / 32767.5 - 1.0)
        return np.stack(rows)


class PrecomputedBackbone(Backbone):
    """Looks up ``<root>/<video_id>.npy`` arrays of shape (30, dim) computed elsewhere."""

    name = "precomputed"

    def __init__(self, root, dim):
        self.root = Path(root)
        self.dim = dim

    def embed(self, stack):
        path = self.root / f"{stack.video_id}.npy"
        if not path.exists():
            raise CacheMissError(f"no precomputed features at {path}")
        return np.load(path)


class TorchvisionBackbone(Backbone):
    """ImageNet CNN with its classification layer removed.

    Frames are scaled to [0, 1] and normalised with the ImageNet mean/std
    that torchvision's pretrained weights expect.  ``weights=None`` builds a
    randomly initialised network (useful offline).  Calls are serialised by
    an internal lock.
    """

    _DIMS = {"efficientnetb0": 1280, "resnet101": 2048, "vgg16": 4096}

    def __init__(self, name, weights="DEFAULT", device="cpu", batch_size=10):
        import torch
        import torchvision.models as tvm

        if name not in self._DIMS:
            raise UnknownBackboneError(f"unknown backbone {name!r}")
        self.name = name
        self.dim = self._DIMS[name]
        self.device = device
        self.batch_size = batch_size
        if name == "efficientnetb0":
            model = tvm.efficientnet_b0(weights=weights)
            model.classifier = torch.nn.Identity()
        elif name == "resnet101":
            model = tvm.resnet101(weights=weights)
            model.fc = torch.nn.Identity()
        else:
            model = tvm.vgg16(weights=weights)
            model.classifier[-1] = torch.nn.Identity()
        self.model = model.eval().to(device)
        self._torch = torch
        self._mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        self._std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        self._lock = threading.Lock()

    def embed_frames(self, frames):
        torch = self._torch
        x = torch.from_numpy(np.ascontiguousarray(frames)).permute(0, 3, 1, 2).float() / 255.0
        x = (x - self._mean) / self._std
        out = []
        with self._lock, torch.no_grad():
            for start in range(0, len(x), self.batch_size):
                out.append(self.model(x[start : start + self.batch_size].to(self.device)).cpu().numpy())
        return np.concatenate(out)

    def embed(self, stack):
        return self.embed_frames(stack.frames)


BACKBONE_DIMS = {"efficientnetb0": 1280, "resnet101": 2048, "vgg16": 4096, "synthetic": 1280, "precomputed": None}


def get_backbone(name, **kwargs):
    """Instantiate a registered backbone by name."""
    if name == "synthetic":
        return SyntheticBackbone(**kwargs)
    if name == "precomputed":
        return PrecomputedBackbone(**kwargs)
    if name in TorchvisionBackbone._DIMS:
        return TorchvisionBackbone(name, **kwargs)
    raise UnknownBackboneError(f"unknown backbone {name!r}; choose from {', '.join(BACKBONE_DIMS)}")


def extract_features(stack, backbone):
    if isinstance(backbone, str):
        backbone = get_backbone(backbone)
    return backbone.apply(stack)


# -- on-disk cache -------------------------------------------------------------------


def feature_path(cache_dir, video_id, backbone):
    return Path(cache_dir) / backbone / (quote(video_id, safe="-_.") + FEATURE_EXT)


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def encode_features(tensor):
    rows, dim = tensor.features.shape
    return b"".join(
        [
            FEATURE_MAGIC,
            struct.pack("<I", FEATURE_VERSION),
            _pack_str(tensor.video_id),
            _pack_str(tensor.backbone),
            struct.pack("<II", rows, dim),
            tensor.features.astype("<f4").tobytes(),
        ]
    )


def decode_features(blob, source="<bytes>"):
    def fail(msg):
        raise CorruptCacheError(f"{source}: {msg}")

    if len(blob) < 16 or blob[:12] != FEATURE_MAGIC:
        fail("bad magic")
    (version,) = struct.unpack_from("<I", blob, 12)
    if version != FEATURE_VERSION:
        fail(f"unsupported version {version}")
    pos = 16
    strings = []
    for _ in range(2):
        if pos + 4 > len(blob):
            fail("truncated header")
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + n > len(blob):
            fail("truncated header")
        try:
            strings.append(blob[pos : pos + n].decode("utf-8"))
        except UnicodeDecodeError:
            fail("header string is not UTF-8")
        pos += n
    if pos + 8 > len(blob):
        fail("truncated header")
    rows, dim = struct.unpack_from("<II", blob, pos)
    pos += 8
    payload = blob[pos:]
    if len(payload) != 4 * rows * dim:
        fail(f"header declares {rows}x{dim} floats but payload holds {len(payload) // 4}")
    feats = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).astype(np.float32)
    return FeatureTensor(strings[0], strings[1], feats)


def save_features(tensor, cache_dir):
    """Write ``tensor`` atomically (temp file + rename) and return its path."""
    path = feature_path(cache_dir, tensor.video_id, tensor.backbone)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fp:
            fp.write(encode_features(tensor))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_features(video_id, backbone, cache_dir):
    path = feature_path(cache_dir, video_id, backbone)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise CacheMissError(f"no cached {backbone} features for video {video_id!r} at {path}") from None
    tensor = decode_features(blob, source=str(path))
    if tensor.video_id != video_id or tensor.backbone != backbone:
        raise CorruptCacheError(f"{path}: holds ({tensor.video_id!r}, {tensor.backbone!r})")
    return tensor


class FeatureStore:
    """Read-only view of one backbone's cache, usable wherever a features index is expected."""

    def __init__(self, cache_dir, backbone):
        self.cache_dir = Path(cache_dir)
        self.backbone = backbone

    def __contains__(self, video_id):
        return feature_path(self.cache_dir, video_id, self.backbone).exists()

    def __getitem__(self, video_id):
        return load_features(video_id, self.backbone, self.cache_dir).features
