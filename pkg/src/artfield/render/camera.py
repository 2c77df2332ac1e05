"""Pinhole cameras: +z forward, x right, y down, pixel centres at +0.5."""

import json
from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # world_from_camera, columns are camera axes
    translation: np.ndarray  # camera centre in world coordinates

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        r = self.rotation
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("camera rotation is not a proper rotation")

    @property
    def forward(self):
        return self.rotation[:, 2].copy()

    def to_json(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "rotation": self.rotation.ravel().tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]),
                   np.asarray(d["rotation"], dtype=float).reshape(3, 3), d["translation"])

    def scaled_scene(self, scale, offset):
        """Same camera in a scene mapped by x -> scale * x + offset."""
        return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height,
                      self.rotation, scale * self.translation + offset)


def load_camera(path):
    with open(path) as fh:
        return Camera.from_json(json.load(fh))


def save_camera(path, cam):
    with open(path, "w") as fh:
        json.dump(cam.to_json(), fh, indent=1)


def look_at(eye, target, up=(0.0, 1.0, 0.0), width=64, height=64, fov_deg=40.0):
    """Camera at ``eye`` whose optical axis passes through ``target``."""
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    f = 0.5 * width / np.tan(0.5 * np.radians(fov_deg))
    return Camera(f, f, width / 2.0, height / 2.0, width, height,
                  np.stack([x, y, z], axis=1), eye)


def generate_rays(cam):
    """Origins and unit directions for every pixel, row-major (H*W, 3)."""
    j, i = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
    d = np.stack([(i.ravel() + 0.5 - cam.cx) / cam.fx,
                  (j.ravel() + 0.5 - cam.cy) / cam.fy,
                  np.ones(cam.width * cam.height)], axis=1)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d = d @ cam.rotation.T
    # re-normalize after the rotation to keep |d| = 1 to rounding
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    o = np.broadcast_to(cam.translation, d.shape).copy()
    return o, d
