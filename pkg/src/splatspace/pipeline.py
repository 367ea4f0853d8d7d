"""2D→3D generation jobs: segmentation, confirmation gate, multiview, fusing.

The confirmation gate is part of the job state machine, not the UI: a job
parks at ``awaiting_confirmation`` exposing its cutout, and only advances to
the 3D stages on an explicit confirm.  Stage transitions are serialized per
job; backend calls run off-thread with a timeout and one retry.
"""

from __future__ import annotations

import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .assets import GaussianSplatAsset, parse_ply
from .config import ServiceConfig
from .store import AssetStore

PROMPT_SOURCES = ("web_view", "camera_feed", "file")
PROMPT_POINTS = 3

STAGES = ("segmenting", "awaiting_confirmation", "multiview", "fusing", "done", "failed")
_ALLOWED = {
    "segmenting": {"awaiting_confirmation", "failed"},
    "awaiting_confirmation": {"multiview", "failed"},
    "multiview": {"fusing", "failed"},
    "fusing": {"done", "failed"},
    "done": set(),
    "failed": set(),
}


class InvalidPrompt(ValueError):
    """Prompt violates the three-points-inside-frame contract."""


class WrongStage(RuntimeError):
    """Operation not permitted in the job's current stage."""


class UnknownJob(KeyError):
    """No job with that id."""


class BackendFailure(RuntimeError):
    """A backend stage failed or timed out."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


class Backend(Protocol):
    """Inference contract; every call must be deterministic for mocks."""

    def segment(self, frame: np.ndarray, points) -> np.ndarray: ...
    def multiview(self, cutout: np.ndarray) -> list[np.ndarray]: ...
    def gaussian(self, cutout: np.ndarray, views: list[np.ndarray]) -> bytes: ...


@dataclass(frozen=True)
class SegmentationPrompt:
    """An RGBA frame plus exactly three in-bounds pixel points."""

    frame: np.ndarray
    points: tuple[tuple[int, int], ...]
    source: str = "file"

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=np.uint8)
        if frame.ndim != 3 or frame.shape[2] != 4:
            raise InvalidPrompt(f"frame must be HxWx4 RGBA, got shape {frame.shape}")
        object.__setattr__(self, "frame", frame)
        points = tuple((int(x), int(y)) for x, y in self.points)
        if len(points) != PROMPT_POINTS:
            raise InvalidPrompt(f"expected {PROMPT_POINTS} points, got {len(points)}")
        h, w = frame.shape[:2]
        for x, y in points:
            if not (0 <= x < w and 0 <= y < h):
                raise InvalidPrompt(f"point ({x}, {y}) outside {w}x{h} frame")
        object.__setattr__(self, "points", points)
        if self.source not in PROMPT_SOURCES:
            raise InvalidPrompt(f"unknown prompt source {self.source!r}")


@dataclass
class SegmentedObject:
    """Full-frame mask plus the transparent-background crop shown for confirmation."""

    mask: np.ndarray
    cutout: np.ndarray
    warning: bool = False   # set when a prompt point fell outside the mask


def build_cutout(frame: np.ndarray, mask: np.ndarray, margin: int = 4) -> np.ndarray:
    """Masked RGBA crop of ``frame`` with a margin around the mask bounds."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("mask is empty")
    h, w = mask.shape
    y0, y1 = max(int(ys.min()) - margin, 0), min(int(ys.max()) + margin + 1, h)
    x0, x1 = max(int(xs.min()) - margin, 0), min(int(xs.max()) + margin + 1, w)
    out = np.zeros((h, w, 4), dtype=np.uint8)
    out[mask, :3] = frame[mask, :3]
    out[mask, 3] = 255
    return out[y0:y1, x0:x1].copy()


@dataclass
class MultiviewSet:
    """Source cutout plus the four conditioned views."""

    source: np.ndarray
    front: np.ndarray
    left: np.ndarray
    right: np.ndarray
    back: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [self.front, self.left, self.right, self.back]


@dataclass
class JobView:
    """Read-only snapshot of a job for callers and the wire layer."""

    job_id: str
    stage: str
    source: str
    error: str | None = None
    result_asset: str | None = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    cutout: np.ndarray | None = None
    warning: bool = False
    context: object = None


class _Job:
    def __init__(self, job_id: str, prompt: SegmentationPrompt, context=None):
        self.job_id = job_id
        self.prompt = prompt
        self.context = context
        self.stage = "segmenting"
        self.segmented: SegmentedObject | None = None
        self.multiview: MultiviewSet | None = None
        self.result_asset: str | None = None
        self.error: str | None = None
        self.timings_ms: dict[str, float] = {}
        self.started = time.perf_counter()
        self.cond = threading.Condition()


class GenerationPipeline:
    """Orchestrates jobs over a pluggable backend; jobs run concurrently."""

    def __init__(self, backend: Backend, assets: AssetStore,
                 config: ServiceConfig | None = None,
                 on_update: Callable[[JobView], None] | None = None):
        self.backend = backend
        self.assets = assets
        self.config = config or ServiceConfig()
        self.on_update = on_update
        self.provenance = "mock" if type(backend).__name__.startswith("Mock") else "backend"
        self._jobs: dict[str, _Job] = {}
        self._table_lock = threading.RLock()
        self._workers = ThreadPoolExecutor(max_workers=4, thread_name_prefix="pipeline")
        self._io = ThreadPoolExecutor(max_workers=8, thread_name_prefix="backend")
        self._closed = False

    # -- public API ---------------------------------------------------------

    def submit_prompt(self, prompt: SegmentationPrompt, context=None) -> str:
        """Create a job; ``context`` is opaque caller data echoed on JobViews."""
        if not isinstance(prompt, SegmentationPrompt):
            prompt = SegmentationPrompt(**prompt)
        job = _Job(uuid.uuid4().hex, prompt, context)
        with self._table_lock:
            self._jobs[job.job_id] = job
        self._workers.submit(self._run_segment, job)
        return job.job_id

    def confirm(self, job_id: str) -> None:
        job = self._get(job_id)
        with job.cond:
            if job.stage != "awaiting_confirmation":
                raise WrongStage(f"confirm requires awaiting_confirmation, job is {job.stage}")
            self._advance_locked(job, "multiview")
        self._notify(job)
        self._workers.submit(self._run_generate, job)

    def reject(self, job_id: str) -> None:
        job = self._get(job_id)
        with job.cond:
            if job.stage != "awaiting_confirmation":
                raise WrongStage(f"reject requires awaiting_confirmation, job is {job.stage}")
            job.error = "rejected by user"
            job.segmented = None
            self._advance_locked(job, "failed")
        self._notify(job)

    def job(self, job_id: str) -> JobView:
        return self._view(self._get(job_id))

    def job_ids(self) -> list[str]:
        with self._table_lock:
            return list(self._jobs)

    def wait(self, job_id: str, stages=("awaiting_confirmation", "done", "failed"),
             timeout: float = 30.0) -> JobView:
        job = self._get(job_id)
        deadline = time.monotonic() + timeout
        with job.cond:
            while job.stage not in stages:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not job.cond.wait(remaining):
                    raise TimeoutError(f"job {job_id} still {job.stage} after {timeout}s")
        return self._view(job)

    def close(self) -> None:
        self._closed = True
        self._workers.shutdown(wait=True)
        self._io.shutdown(wait=False)

    # -- stage workers ------------------------------------------------------

    def _run_segment(self, job: _Job) -> None:
        t0 = time.perf_counter()
        try:
            mask = self._call("segmenting", self.backend.segment, job.prompt.frame, job.prompt.points)
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != job.prompt.frame.shape[:2]:
                raise BackendFailure("segmenting", f"mask shape {mask.shape} != frame")
            if not mask.any():
                raise BackendFailure("segmenting", "backend returned an empty mask")
            warning = not all(mask[y, x] for x, y in job.prompt.points)
            cutout = build_cutout(job.prompt.frame, mask)
            with job.cond:
                job.segmented = SegmentedObject(mask=mask, cutout=cutout, warning=warning)
                job.timings_ms["segmenting"] = (time.perf_counter() - t0) * 1000.0
                self._advance_locked(job, "awaiting_confirmation")
        except BackendFailure as exc:
            self._fail(job, exc)
            return
        self._notify(job)

    def _run_generate(self, job: _Job) -> None:
        try:
            cutout = job.segmented.cutout
            t0 = time.perf_counter()
            views = self._call("multiview", self.backend.multiview, cutout)
            if len(views) != 4:
                raise BackendFailure("multiview", f"expected 4 views, got {len(views)}")
            with job.cond:
                job.multiview = MultiviewSet(cutout, *[np.asarray(v, dtype=np.uint8) for v in views])
                job.timings_ms["multiview"] = (time.perf_counter() - t0) * 1000.0
                self._advance_locked(job, "fusing")
            self._notify(job)

            t1 = time.perf_counter()
            blob = self._call("fusing", self.backend.gaussian, cutout, views)
            parsed = parse_ply(bytes(blob))
            asset = GaussianSplatAsset(
                parsed.positions, parsed.rotations, parsed.log_scales,
                parsed.raw_opacities, parsed.colors_dc, provenance=self.provenance,
            )
            asset_id = self.assets.register(asset, source_image=cutout)
            with job.cond:
                job.result_asset = asset_id
                job.timings_ms["fusing"] = (time.perf_counter() - t1) * 1000.0
                self._advance_locked(job, "done")
        except BackendFailure as exc:
            self._fail(job, exc)
            return
        except Exception as exc:  # malformed backend output
            self._fail(job, BackendFailure("fusing", str(exc)))
            return
        self._notify(job)

    # -- internals ----------------------------------------------------------

    def _call(self, stage: str, fn, *args):
        attempts = 1 + max(0, self.config.stage_retries)
        last = "unknown failure"
        for _ in range(attempts):
            future = self._io.submit(fn, *args)
            try:
                return future.result(timeout=self.config.stage_timeout_s)
            except FutureTimeout:
                last = f"timed out after {self.config.stage_timeout_s}s"
            except BackendFailure as exc:
                last = exc.message
            except Exception as exc:
                last = str(exc) or type(exc).__name__
        raise BackendFailure(stage, last)

    def _advance_locked(self, job: _Job, stage: str) -> None:
        if stage not in _ALLOWED[job.stage]:
            raise WrongStage(f"illegal transition {job.stage} -> {stage}")
        job.stage = stage
        job.cond.notify_all()

    def _fail(self, job: _Job, exc: BackendFailure) -> None:
        with job.cond:
            if job.stage in ("done", "failed"):
                return
            job.error = str(exc)
            self._advance_locked(job, "failed")
        self._notify(job)

    def _get(self, job_id: str) -> _Job:
        with self._table_lock:
            try:
                return self._jobs[job_id]
            except KeyError:
                raise UnknownJob(job_id) from None

    def _view(self, job: _Job) -> JobView:
        with job.cond:
            return JobView(
                job_id=job.job_id,
                stage=job.stage,
                source=job.prompt.source,
                error=job.error,
                result_asset=job.result_asset,
                timings_ms=dict(job.timings_ms),
                cutout=None if job.segmented is None else job.segmented.cutout,
                warning=False if job.segmented is None else job.segmented.warning,
                context=job.context,
            )

    def _notify(self, job: _Job) -> None:
        if self.on_update is not None:
            self.on_update(self._view(job))
