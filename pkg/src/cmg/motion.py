"""Motion representations and the conversions between them.

Two forms:

* ``RelativeMotion`` -- per frame, a D-dimensional channel vector:
  [root angular velocity about up (1), root linear velocity in the ground
  plane (2), root height (1), heading-local positions of the J-1 non-root
  joints ((J-1)*3), heading-local velocities of all J joints (J*3), 6-D
  bone rotations ((J-1)*6), foot contact labels (4)].
  D = 1 + 2 + 1 + 3(J-1) + 3J + 6(J-1) + 4 = 12J - 1 (263 for J = 22).

* ``GlobalMotion`` -- absolute joint positions, (f, J, 3), y up, meters.

Velocities at frame i describe the transition i -> i+1; the last frame
repeats the previous value and is ignored by reconstruction.  The heading
angle theta rotates the canonical forward +z into the character's forward;
R_y(theta) maps (x, z) to (cos*x + sin*z, -sin*x + cos*z).

``relative_to_global`` pins frame 0 to the canonical frame (root above the
origin, heading zero), so a global -> relative -> global round trip
reproduces the input up to a rigid alignment of frame 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .skeleton import Skeleton

DEFAULT_FPS = 20.0
CONTACT_HEIGHT_THRESH = 0.05  # meters
CONTACT_VEL_THRESH = 0.0025  # meters per frame


def dims_for_joints(J: int) -> int:
    return 12 * J - 1


def joints_for_dims(D: int) -> int:
    J, rem = divmod(D + 1, 12)
    if rem != 0 or J < 2:
        raise ValidationError(f"channel dimension {D} does not match 12J - 1")
    return J


@dataclass(frozen=True)
class ChannelLayout:
    """Slices into the relative channel vector for a J-joint skeleton."""

    J: int

    @property
    def D(self) -> int:
        return dims_for_joints(self.J)

    @property
    def root(self) -> slice:  # omega, vx, vz, height
        return slice(0, 4)

    @property
    def positions(self) -> slice:
        return slice(4, 4 + 3 * (self.J - 1))

    @property
    def velocities(self) -> slice:
        lo = 4 + 3 * (self.J - 1)
        return slice(lo, lo + 3 * self.J)

    @property
    def rotations(self) -> slice:
        lo = 4 + 3 * (self.J - 1) + 3 * self.J
        return slice(lo, lo + 6 * (self.J - 1))

    @property
    def contacts(self) -> slice:
        return slice(self.D - 4, self.D)


@dataclass
class RelativeMotion:
    data: np.ndarray  # (f, D) float64
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValidationError("relative motion must be a (frames, D) array")
        if self.data.shape[0] < 1:
            raise ValidationError("relative motion needs at least one frame")
        joints_for_dims(self.data.shape[1])
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("relative motion contains non-finite values")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def J(self) -> int:
        return joints_for_dims(self.data.shape[1])


@dataclass
class GlobalMotion:
    positions: np.ndarray  # (f, J, 3) float64
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ValidationError("global motion must be a (frames, J, 3) array")
        if self.positions.shape[0] < 1:
            raise ValidationError("global motion needs at least one frame")
        if not np.all(np.isfinite(self.positions)):
            raise ValidationError("global motion contains non-finite values")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")

    @property
    def frames(self) -> int:
        return self.positions.shape[0]

    @property
    def J(self) -> int:
        return self.positions.shape[1]


# ----------------------------------------------------------------------
# relative -> global, written on the autodiff tape so guidance and the
# training losses can differentiate through it.
def _shifted_cumsum(x: ad.Tensor, axis: int = -1) -> ad.Tensor:
    """[0, x0, x0+x1, ...]: prefix sums excluding the element itself."""
    zero = ad.mul(x[..., :1], 0.0)
    running = ad.cumsum(x, axis=axis)
    return ad.concatenate([zero, running[..., :-1]], axis=axis)


def relative_to_global_tensor(x: ad.Tensor, J: int) -> ad.Tensor:
    """Differentiable relative -> global conversion.

    ``x`` has shape (..., f, D); the result has shape (..., f, J, 3).
    """
    lay = ChannelLayout(J)
    omega = x[..., 0]
    vx = x[..., 1]
    vz = x[..., 2]
    height = x[..., 3]

    theta = _shifted_cumsum(omega)
    c = ad.cos(theta)
    s = ad.sin(theta)

    # per-frame root displacement in world coordinates, then integrate
    dx = ad.add(ad.mul(c, vx), ad.mul(s, vz))
    dz = ad.add(ad.mul(ad.mul(s, vx), -1.0), ad.mul(c, vz))
    root_x = _shifted_cumsum(dx)
    root_z = _shifted_cumsum(dz)

    local = x[..., lay.positions]
    shape = local.shape[:-1] + (J - 1, 3)
    local = ad.reshape(local, shape)
    lx = local[..., 0]
    ly = local[..., 1]
    lz = local[..., 2]

    cE = ad.reshape(c, c.shape + (1,))
    sE = ad.reshape(s, s.shape + (1,))
    rxE = ad.reshape(root_x, root_x.shape + (1,))
    rzE = ad.reshape(root_z, root_z.shape + (1,))
    hE = ad.reshape(height, height.shape + (1,))

    gx = ad.add(ad.add(ad.mul(cE, lx), ad.mul(sE, lz)), rxE)
    gy = ad.add(ly, hE)
    gz = ad.add(ad.sub(ad.mul(cE, lz), ad.mul(sE, lx)), rzE)
    others = ad.stack([gx, gy, gz], axis=-1)  # (..., f, J-1, 3)

    root = ad.stack([root_x, height, root_z], axis=-1)  # (..., f, 3)
    root = ad.reshape(root, root.shape[:-1] + (1, 3))
    return ad.concatenate([root, others], axis=-2)


def relative_to_global(rel: RelativeMotion, skel: Skeleton) -> GlobalMotion:
    """Integrate root velocities and place local joints in the world frame."""
    if rel.J != skel.J:
        raise ValidationError(f"motion has {rel.J} joints, skeleton has {skel.J}")
    glob = relative_to_global_tensor(ad.Tensor(rel.data), skel.J).value
    return GlobalMotion(positions=glob, fps=rel.fps)


# ----------------------------------------------------------------------
# global -> relative (plain numpy; never differentiated)
def _heading_angles(positions: np.ndarray, skel: Skeleton) -> np.ndarray:
    """Per-frame heading from hip/shoulder lines; zeros without orientation."""
    f = positions.shape[0]
    if skel.orientation is None:
        return np.zeros(f)
    lh, rh, ls, rs = skel.orientation
    across = (positions[:, lh] - positions[:, rh]) + (positions[:, ls] - positions[:, rs])
    # forward = cross(across, up) with up = +y
    fx = -across[:, 2]
    fz = across[:, 0]
    theta = np.zeros(f)
    prev = 0.0
    for i in range(f):
        if np.hypot(fx[i], fz[i]) < 1e-8:
            theta[i] = prev
        else:
            theta[i] = np.arctan2(fx[i], fz[i])
            prev = theta[i]
    return np.unwrap(theta)


def _pad_last(v: np.ndarray) -> np.ndarray:
    """Repeat the final row so per-transition data fills all f frames."""
    return np.concatenate([v, v[-1:]], axis=0)


def _rotate_heading_inv(theta: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Apply R_y(-theta) to (..., 3) vectors; theta broadcasts over vec[..., 0]."""
    c = np.cos(theta)
    s = np.sin(theta)
    out = np.empty_like(vec)
    out[..., 0] = c * vec[..., 0] - s * vec[..., 2]
    out[..., 1] = vec[..., 1]
    out[..., 2] = s * vec[..., 0] + c * vec[..., 2]
    return out


def _bone_frames_6d(local: np.ndarray, skel: Skeleton) -> np.ndarray:
    """6-D direction frames for each non-root bone, (f, (J-1)*6).

    Column one is the unit bone direction; column two is a reference axis
    (up, or forward when the bone is vertical) orthogonalised against it.
    """
    f = local.shape[0]
    J = skel.J
    out = np.zeros((f, J - 1, 6))
    full = np.concatenate([np.zeros((f, 1, 3)), local], axis=1)  # root at local origin
    for j in range(1, J):
        p = skel.parents[j]
        bone = full[:, j] - full[:, p]
        length = np.linalg.norm(bone, axis=-1, keepdims=True)
        d = np.where(length > 1e-8, bone / np.maximum(length, 1e-12), [0.0, 1.0, 0.0])
        ref = np.where(
            np.abs(d[:, 1:2]) < 0.99, [[0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0]]
        )
        ortho = ref - (ref * d).sum(axis=-1, keepdims=True) * d
        on = np.linalg.norm(ortho, axis=-1, keepdims=True)
        col1 = np.where(on > 1e-8, ortho / np.maximum(on, 1e-12), [1.0, 0.0, 0.0])
        out[:, j - 1, :3] = d
        out[:, j - 1, 3:] = col1
    return out.reshape(f, (J - 1) * 6)


def detect_foot_contacts(
    glob: GlobalMotion,
    skel: Skeleton,
    h_thresh: float = CONTACT_HEIGHT_THRESH,
    v_thresh: float = CONTACT_VEL_THRESH,
) -> np.ndarray:
    """Contact labels for the four foot joints, (f, 4) in {0, 1}.

    A foot is in contact when its height is below ``h_thresh`` and its
    horizontal travel to the next frame is below ``v_thresh``.
    """
    if glob.J != skel.J:
        raise ValidationError("motion and skeleton joint counts disagree")
    feet = list(skel.foot_joints)
    pos = glob.positions[:, feet]  # (f, 4, 3)
    heights = pos[:, :, 1]
    if glob.frames == 1:
        disp = np.zeros((1, len(feet)))
    else:
        d = np.linalg.norm(np.diff(pos[:, :, [0, 2]], axis=0), axis=-1)
        disp = _pad_last(d)
    return ((heights < h_thresh) & (disp < v_thresh)).astype(np.float64)


def global_to_relative(
    glob: GlobalMotion,
    skel: Skeleton,
    h_thresh: float = CONTACT_HEIGHT_THRESH,
    v_thresh: float = CONTACT_VEL_THRESH,
) -> RelativeMotion:
    """Project world-frame positions onto the relative channel layout."""
    if glob.J != skel.J:
        raise ValidationError("motion and skeleton joint counts disagree")
    if glob.frames < 2:
        raise ValidationError("global -> relative needs at least 2 frames")
    pos = glob.positions
    f, J = glob.frames, glob.J

    theta = _heading_angles(pos, skel)
    omega = _pad_last(np.diff(theta))

    root = pos[:, 0]
    height = root[:, 1]
    droot = np.diff(root, axis=0)  # (f-1, 3)
    v_local = _rotate_heading_inv(theta[:-1, None], droot[:, None, :])[:, 0]
    vx = _pad_last(v_local[:, 0:1])[:, 0]
    vz = _pad_last(v_local[:, 2:3])[:, 0]

    root_anchor = np.stack([root[:, 0], height, root[:, 2]], axis=-1)
    local = _rotate_heading_inv(theta[:, None], pos[:, 1:] - root_anchor[:, None, :])

    dpos = np.diff(pos, axis=0)  # (f-1, J, 3)
    vel = _pad_last(_rotate_heading_inv(theta[:-1, None], dpos))

    rot6d = _bone_frames_6d(local, skel)
    contacts = detect_foot_contacts(glob, skel, h_thresh, v_thresh)

    data = np.concatenate(
        [
            omega[:, None],
            vx[:, None],
            vz[:, None],
            height[:, None],
            local.reshape(f, (J - 1) * 3),
            vel.reshape(f, J * 3),
            rot6d,
            contacts,
        ],
        axis=1,
    )
    return RelativeMotion(data=data, fps=glob.fps)


def canonicalize_global(glob: GlobalMotion, skel: Skeleton) -> GlobalMotion:
    """Rigidly align frame 0: pelvis above the origin, heading zero."""
    pos = glob.positions
    theta0 = _heading_angles(pos[:1], skel)[0]
    shifted = pos - np.array([pos[0, 0, 0], 0.0, pos[0, 0, 2]])
    c, s = np.cos(-theta0), np.sin(-theta0)
    out = np.empty_like(shifted)
    out[..., 0] = c * shifted[..., 0] + s * shifted[..., 2]
    out[..., 1] = shifted[..., 1]
    out[..., 2] = -s * shifted[..., 0] + c * shifted[..., 2]
    return GlobalMotion(positions=out, fps=glob.fps)
