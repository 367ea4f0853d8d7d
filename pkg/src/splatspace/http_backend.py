"""HTTP adapter for external model servers.

Wire contract (JSON field names are normative):

    POST {base}/segment   {"image": b64png, "points": [[x,y],[x,y],[x,y]]} -> {"mask": b64png}
    POST {base}/multiview {"image": b64png}                                -> {"views": [b64png x4]}
    POST {base}/gaussian  {"image": b64png, "views": [b64png x4]}          -> {"ply": b64bytes}

Network, status, and decode failures all surface as BackendFailure.
"""

from __future__ import annotations

import base64

import numpy as np
import requests

from .imaging import b64_to_png, png_to_b64, rgba_to_mask
from .pipeline import BackendFailure


class HttpBackend:
    def __init__(self, base_url: str, timeout: float = 30.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def _post(self, stage: str, path: str, payload: dict) -> dict:
        try:
            resp = self.session.post(f"{self.base_url}{path}", json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendFailure(stage, f"request failed: {exc}") from None
        if resp.status_code != 200:
            raise BackendFailure(stage, f"HTTP {resp.status_code} from {path}")
        try:
            body = resp.json()
        except ValueError:
            raise BackendFailure(stage, f"non-JSON response from {path}") from None
        if not isinstance(body, dict):
            raise BackendFailure(stage, f"expected JSON object from {path}")
        return body

    def segment(self, frame: np.ndarray, points) -> np.ndarray:
        body = self._post("segmenting", "/segment", {
            "image": png_to_b64(frame),
            "points": [[int(x), int(y)] for x, y in points],
        })
        try:
            return rgba_to_mask(b64_to_png(body["mask"]))
        except Exception as exc:
            raise BackendFailure("segmenting", f"bad mask payload: {exc}") from None

    def multiview(self, cutout: np.ndarray) -> list[np.ndarray]:
        body = self._post("multiview", "/multiview", {"image": png_to_b64(cutout)})
        views = body.get("views")
        if not isinstance(views, list) or len(views) != 4:
            raise BackendFailure("multiview", "response missing 4-entry 'views' list")
        try:
            return [b64_to_png(v) for v in views]
        except Exception as exc:
            raise BackendFailure("multiview", f"bad view payload: {exc}") from None

    def gaussian(self, cutout: np.ndarray, views: list[np.ndarray]) -> bytes:
        body = self._post("fusing", "/gaussian", {
            "image": png_to_b64(cutout),
            "views": [png_to_b64(v) for v in views],
        })
        try:
            return base64.b64decode(body["ply"], validate=True)
        except (KeyError, ValueError) as exc:
            raise BackendFailure("fusing", f"bad ply payload: {exc}") from None


def http_backend(endpoint_base: str, timeout: float = 30.0) -> HttpBackend:
    """Backend contract bound to ``endpoint_base`` (e.g. http://host:port)."""
    return HttpBackend(endpoint_base, timeout=timeout)
