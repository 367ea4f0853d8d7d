"""Thread-safe registry of immutable splat assets, keyed by content hash."""

from __future__ import annotations

import threading

from .assets import GaussianSplatAsset, serialize_ply


class UnknownAsset(KeyError):
    """Asset id not present in the store."""


class AssetStore:
    def __init__(self):
        self._lock = threading.RLock()
        self._assets: dict[str, GaussianSplatAsset] = {}
        self._blobs: dict[str, bytes] = {}
        self._sources: dict[str, object] = {}

    def register(self, asset: GaussianSplatAsset, source_image=None) -> str:
        """Add an asset (idempotent); ``source_image`` is the 2D origin shown
        in pie-menu centers, when the asset came out of the pipeline."""
        with self._lock:
            asset_id = asset.asset_id
            if asset_id not in self._assets:
                self._assets[asset_id] = asset
                self._blobs[asset_id] = serialize_ply(asset)
            if source_image is not None:
                self._sources[asset_id] = source_image
            return asset_id

    def source_image(self, asset_id: str):
        with self._lock:
            return self._sources.get(asset_id)

    def get(self, asset_id: str) -> GaussianSplatAsset:
        with self._lock:
            try:
                return self._assets[asset_id]
            except KeyError:
                raise UnknownAsset(asset_id) from None

    def blob(self, asset_id: str) -> bytes:
        with self._lock:
            try:
                return self._blobs[asset_id]
            except KeyError:
                raise UnknownAsset(asset_id) from None

    def __contains__(self, asset_id: str) -> bool:
        with self._lock:
            return asset_id in self._assets

    def ids(self) -> list[str]:
        with self._lock:
            return list(self._assets)

    def diagonal(self, asset_id: str) -> float:
        return self.get(asset_id).bounds.diagonal
