"""
合成デプスシーンのレンダラー

解析的なプリミティブ（平面・直方体・カプセル・楕円体）に対して画素ごとにレイを飛ばし、
最も近い交点のカメラ z 深度を合成する。部屋（奥の壁・床・側壁）、家具（ベッド・椅子・消毒液ディスペンサー）、
カプセルと楕円体で組んだ人物を配置し、人物の姿勢がクラスを表す。

乱数は用途ごとに独立したストリームを使う:
    レイアウト / 人物（instance_seed）、姿勢の揺らぎとセンサーノイズ（seed）。
人物なしのシーンは、同じシードの背景レンダリングと一致する。
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from constants import DepthConstants, Provenance, Task, TaskClasses
from exceptions import ConfigurationError
from image_resample import DepthFrame

logger = logging.getLogger(__name__)

VIEW_SIDE = "side"
VIEW_TOP_DOWN = "top_down"

FAMILY_GENERIC = "generic"
SR_CORPUS_FAMILIES = (Task.HAND_HYGIENE.value, Task.ICU.value, FAMILY_GENERIC)

_STREAM_LAYOUT = 1
_STREAM_ACTOR = 2
_STREAM_JITTER = 3
_STREAM_SENSOR = 4

# これより近い交点はカメラ位置とみなして捨てる
_MIN_T = 1e-6

Vec = Tuple[float, float, float]


# ---------------------------------------------------------------------------
# プリミティブ
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Plane:
    """n・p = offset を満たす平面"""
    normal: Vec
    offset: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.offset - origin @ n) / denom
        # カメラの後ろ（t <= 0）の交点は採用しない
        return np.where((np.abs(denom) > 1e-12) & (t > _MIN_T), t, np.inf)


@dataclass(frozen=True)
class Box:
    """軸平行な直方体"""
    lo: Vec
    hi: Vec

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        t_near = np.nanmax(np.minimum(t1, t2), axis=1)
        t_far = np.nanmin(np.maximum(t1, t2), axis=1)
        t = np.where(t_near > _MIN_T, t_near, t_far)
        hit = (t_far >= np.maximum(t_near, 0.0)) & (t > _MIN_T)
        return np.where(hit, t, np.inf)


@dataclass(frozen=True)
class Ellipsoid:
    """軸平行な楕円体（radii が等しければ球）"""
    center: Vec
    radii: Vec

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        radii = np.asarray(self.radii)
        o = (origin - np.asarray(self.center)) / radii
        d = dirs / radii
        a = np.einsum("ij,ij->i", d, d)
        b = d @ o
        c = float(o @ o) - 1.0
        return _nearest_root(a, b, np.full_like(a, c))


@dataclass(frozen=True)
class Capsule:
    """線分 p0-p1 と半径 radius のカプセル（円柱部と両端の球の和集合）"""
    p0: Vec
    p1: Vec
    radius: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        pa = np.asarray(self.p0)
        pb = np.asarray(self.p1)
        r2 = self.radius * self.radius
        ba = pb - pa
        oa = origin - pa
        baba = float(ba @ ba)
        dd = np.einsum("ij,ij->i", dirs, dirs)
        bard = dirs @ ba
        baoa = float(ba @ oa)
        rdoa = dirs @ oa
        oaoa = float(oa @ oa)

        a = baba * dd - bard * bard
        b = baba * rdoa - baoa * bard
        c = baba * oaoa - baoa * baoa - r2 * baba
        body = _nearest_root(a, b, np.full_like(a, c))
        along = baoa + body * bard
        body = np.where((along > 0.0) & (along < baba), body, np.inf)

        ends = [Ellipsoid(tuple(p), (self.radius,) * 3).intersect(origin, dirs) for p in (pa, pb)]
        return np.minimum(body, np.minimum(*ends))


def _nearest_root(a: np.ndarray, half_b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """a t^2 + 2 half_b t + c = 0 の正の最小解（なければ inf）"""
    disc = half_b * half_b - a * c
    valid = (disc >= 0.0) & (np.abs(a) > 1e-12)
    root = np.sqrt(np.where(valid, disc, 0.0))
    safe_a = np.where(valid, a, 1.0)
    t0 = (-half_b - root) / safe_a
    t1 = (-half_b + root) / safe_a
    t = np.where(t0 > _MIN_T, t0, np.where(t1 > _MIN_T, t1, np.inf))
    return np.where(valid, t, np.inf)


# ---------------------------------------------------------------------------
# カメラ
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Camera:
    """
    ピンホールカメラ

    Attributes:
        position: 位置（m）
        yaw: 水平方向の回転（rad）
        pitch: 俯角（rad、負で下向き）
        fov_deg: 視野角（正方形画像）
    """
    position: Vec
    yaw: float
    pitch: float
    fov_deg: float = 60.0

    def rays(self, size: int) -> np.ndarray:
        """
        画素ごとのレイ方向 (size*size, 3)

        前方成分が1になるよう正規化しないため、交点パラメータ t がそのまま z 深度になる。
        """
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        forward = np.array([sy * cp, sp, -cy * cp])
        right = np.array([cy, 0.0, sy])
        up = np.cross(right, forward)
        half = math.tan(math.radians(self.fov_deg) / 2.0)
        coords = (np.arange(size) + 0.5) / size * 2.0 - 1.0
        xs = coords[None, :] * half
        ys = -coords[:, None] * half
        dirs = forward[None, None, :] + xs[..., None] * right + ys[..., None] * up
        return dirs.reshape(-1, 3)


SIDE_CAMERA = Camera(position=(0.0, 1.6, 3.4), yaw=0.0, pitch=math.radians(-15.0))
TOP_DOWN_CAMERA = Camera(position=(0.0, 3.2, 1.2), yaw=0.0, pitch=math.radians(-90.0))


# ---------------------------------------------------------------------------
# 人物
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActorParams:
    """
    人物の基本パラメータ

    Attributes:
        x: 床上の x 位置
        z: 床上の z 位置（奥の壁が z=0）
        height: 身長（m）
        phase: 歩行位相など姿勢の補助パラメータ [0, 1)
    """
    x: float
    z: float
    height: float
    phase: float = 0.0


@dataclass
class Skeleton:
    """関節位置（m）"""
    pelvis: np.ndarray
    neck: np.ndarray
    head: np.ndarray
    knees: Tuple[np.ndarray, np.ndarray]
    feet: Tuple[np.ndarray, np.ndarray]
    shoulders: Tuple[np.ndarray, np.ndarray]
    elbows: Tuple[np.ndarray, np.ndarray]
    hands: Tuple[np.ndarray, np.ndarray]
    height: float

    def primitives(self) -> list:
        h = self.height
        hip_offset = np.array([0.06 * h, 0.0, 0.0])
        hips = (self.pelvis - hip_offset, self.pelvis + hip_offset)
        parts: list = [
            Capsule(tuple(self.pelvis), tuple(self.neck), 0.09 * h),
            Ellipsoid(tuple(self.head), (0.055 * h, 0.068 * h, 0.06 * h)),
        ]
        for side in (0, 1):
            parts.append(Capsule(tuple(hips[side]), tuple(self.knees[side]), 0.045 * h))
            parts.append(Capsule(tuple(self.knees[side]), tuple(self.feet[side]), 0.035 * h))
            parts.append(Capsule(tuple(self.shoulders[side]), tuple(self.elbows[side]), 0.03 * h))
            parts.append(Capsule(tuple(self.elbows[side]), tuple(self.hands[side]), 0.026 * h))
        return parts


def _v(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def _upper_body(pelvis: np.ndarray, lean_x: float, lean_z: float, h: float):
    """骨盤位置と傾き（rad）から首・頭・肩を求める"""
    direction = _v(math.sin(lean_x), math.cos(lean_x) * math.cos(lean_z), math.sin(lean_z))
    direction /= np.linalg.norm(direction)
    neck = pelvis + direction * 0.30 * h
    head = neck + direction * 0.10 * h
    shoulder_offset = _v(0.12 * h, 0.0, 0.0)
    shoulders = (neck - shoulder_offset - direction * 0.02 * h, neck + shoulder_offset - direction * 0.02 * h)
    return neck, head, shoulders


def _hanging_arms(shoulders, h: float, swing: float = 0.0):
    elbows = tuple(s + _v(sign * 0.01 * h, -0.17 * h, sign * swing * 0.05 * h) for s, sign in zip(shoulders, (-1, 1)))
    hands = tuple(e + _v(sign * 0.01 * h, -0.16 * h, sign * swing * 0.08 * h) for e, sign in zip(elbows, (-1, 1)))
    return elbows, hands


def standing_skeleton(actor: ActorParams, stride: float = 0.0, lean: float = 0.0) -> Skeleton:
    """立位（stride は歩幅の振れ、lean は前後傾 rad）"""
    h = actor.height
    pelvis = _v(actor.x, 0.53 * h, actor.z)
    neck, head, shoulders = _upper_body(pelvis, 0.0, lean, h)
    feet = (_v(actor.x - 0.07 * h, 0.02, actor.z - stride * 0.15 * h), _v(actor.x + 0.07 * h, 0.02, actor.z + stride * 0.15 * h))
    knees = tuple((pelvis + f) / 2.0 + _v(0.0, 0.0, -0.02 * h) for f in feet)
    elbows, hands = _hanging_arms(shoulders, h, swing=-stride)
    return Skeleton(pelvis, neck, head, knees, feet, shoulders, elbows, hands, h)


# ---------------------------------------------------------------------------
# 部屋とシーン
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneSpec:
    """
    1フレームのシーン仕様

    Attributes:
        task: "hand_hygiene" / "icu" / "sr_corpus"
        label: クラスインデックス（sr_corpus では None）
        seed: 姿勢の揺らぎとセンサーノイズのシード
        instance_seed: レイアウトと人物のシード（省略時は seed）
        view: "side" / "top_down"
        actor_present: 人物を描画するか
        actor: 人物パラメータの上書き（省略時はクラスに応じてサンプリング）
        noise_sigma_m: デプスノイズの標準偏差（m）
        dropout_rate: 無反射スペックルの割合
        size: 出力の一辺
        depth_range: センサー範囲（0.8-4.0 m 固定）
    """
    task: str
    label: Optional[int]
    seed: int
    instance_seed: Optional[int] = None
    view: str = VIEW_SIDE
    actor_present: bool = True
    actor: Optional[ActorParams] = None
    noise_sigma_m: float = 0.01
    dropout_rate: float = 0.002
    size: int = DepthConstants.ORIGINAL_SIDE
    depth_range: Tuple[float, float] = (DepthConstants.MIN_DEPTH_M, DepthConstants.MAX_DEPTH_M)

    def validate(self) -> None:
        """
        Raises:
            ConfigurationError: 不正なタスク・ラベル・視点・深度範囲
        """
        if self.task not in {t.value for t in Task}:
            raise ConfigurationError(f"不明なタスク: {self.task}", config_key="scene.task")
        classes = TaskClasses.for_task(self.task)
        if classes:
            if self.label is None or not 0 <= self.label < len(classes):
                raise ConfigurationError(f"ラベルが範囲外です: {self.label}", config_key="scene.label")
        elif self.label is not None:
            raise ConfigurationError("sr_corpus のシーンにラベルは指定できません", config_key="scene.label")
        if self.view not in (VIEW_SIDE, VIEW_TOP_DOWN):
            raise ConfigurationError(f"不明な視点: {self.view}", config_key="scene.view")
        if tuple(self.depth_range) != (DepthConstants.MIN_DEPTH_M, DepthConstants.MAX_DEPTH_M):
            raise ConfigurationError(f"深度範囲はセンサー範囲に固定です: {self.depth_range}", config_key="scene.depth_range")
        if self.noise_sigma_m < 0 or not 0 <= self.dropout_rate < 1:
            raise ConfigurationError("ノイズパラメータが不正です", config_key="scene.noise_sigma_m")
        if self.size < 1:
            raise ConfigurationError(f"size が不正です: {self.size}", config_key="scene.size")


@dataclass
class Layout:
    """家具の配置（シーン固有の揺らぎ込み）"""
    furniture: List[object] = field(default_factory=list)
    dispenser: Optional[np.ndarray] = None
    bed: Optional[Box] = None
    chair_seat: Optional[Box] = None


def _room() -> list:
    return [
        Plane((0.0, 0.0, 1.0), 0.0),     # 奥の壁
        Plane((0.0, 1.0, 0.0), 0.0),     # 床
        Plane((1.0, 0.0, 0.0), -2.3),    # 左の壁
        Plane((1.0, 0.0, 0.0), 2.3),     # 右の壁
    ]


def _hand_hygiene_layout(rng: np.random.Generator) -> Layout:
    dx = rng.uniform(-0.05, 0.05)
    dispenser_center = _v(0.9 + dx, 1.25, 0.08)
    dispenser = Box((0.84 + dx, 1.1, 0.0), (0.96 + dx, 1.4, 0.16))
    cabinet_w = rng.uniform(0.5, 0.7)
    cabinet = Box((-1.7, 0.0, 0.0), (-1.7 + cabinet_w, 0.9, 0.45))
    door = Box((-0.55, 0.0, 0.0), (0.35, 2.1, 0.04))
    return Layout(furniture=[dispenser, cabinet, door], dispenser=dispenser_center)


def _icu_layout(rng: np.random.Generator) -> Layout:
    dz = rng.uniform(-0.05, 0.05)
    bed = Box((-1.9, 0.0, 0.3 + dz), (-0.1, 0.6, 1.25 + dz))
    headboard = Box((-1.95, 0.0, 0.3 + dz), (-1.85, 1.0, 1.25 + dz))
    cx = rng.uniform(1.05, 1.2)
    seat = Box((cx - 0.25, 0.0, 0.85), (cx + 0.25, 0.45, 1.35))
    chair_back = Box((cx - 0.25, 0.45, 0.85), (cx + 0.25, 0.95, 0.93))
    monitor = Box((-1.2, 1.3, 0.0), (-0.7, 1.7, 0.2))
    return Layout(furniture=[bed, headboard, seat, chair_back, monitor], bed=bed, chair_seat=seat)


def _sample_height(rng: np.random.Generator) -> float:
    return float(rng.uniform(1.6, 1.85))


def _hand_hygiene_actor(label: int, layout: Layout, rng: np.random.Generator, jitter: np.random.Generator, actor: Optional[ActorParams]) -> Skeleton:
    if label == 1:
        base = actor or ActorParams(
            x=float(layout.dispenser[0] - rng.uniform(0.3, 0.4)),
            z=float(rng.uniform(0.55, 0.7)),
            height=_sample_height(rng)
        )
        skeleton = standing_skeleton(base, lean=float(jitter.uniform(-0.05, 0.1)))
        h = base.height
        # 右腕をディスペンサーへ伸ばし前腕を上げる
        target = layout.dispenser + _v(0.0, jitter.uniform(-0.05, 0.05), 0.12)
        shoulder = skeleton.shoulders[1]
        elbow = (shoulder + target) / 2.0 + _v(0.03 * h, -0.08 * h, 0.0)
        elbows = (skeleton.elbows[0], elbow)
        hands = (skeleton.hands[0], target)
        skeleton.elbows = elbows
        skeleton.hands = hands
        return skeleton
    base = actor or ActorParams(
        x=float(rng.uniform(-1.9, -0.1)),
        z=float(rng.uniform(0.6, 1.0)),
        height=_sample_height(rng),
        phase=float(rng.uniform(0.0, 1.0))
    )
    stride = math.sin(2.0 * math.pi * (base.phase + jitter.uniform(-0.05, 0.05)))
    return standing_skeleton(base, stride=stride)


def _icu_actor(label: int, layout: Layout, rng: np.random.Generator, jitter: np.random.Generator, actor: Optional[ActorParams]) -> Skeleton:
    h = actor.height if actor else _sample_height(rng)
    bed, seat = layout.bed, layout.chair_seat
    bed_top = bed.hi[1]
    bed_z = (bed.lo[2] + bed.hi[2]) / 2.0
    seat_x = (seat.lo[0] + seat.hi[0]) / 2.0
    seat_z = (seat.lo[2] + seat.hi[2]) / 2.0
    wobble = float(jitter.uniform(-0.05, 0.05))

    if label == 0:
        base = actor or ActorParams(x=float(rng.uniform(-0.1, 0.6)), z=float(rng.uniform(1.9, 2.3)), height=h)
        return standing_skeleton(base, lean=wobble)

    if label == 1:
        # ベッドに横になりかけ: 上体を頭側へ倒し、脚をベッド上に伸ばす
        px = float(rng.uniform(-0.8, -0.55)) if actor is None else actor.x
        pelvis = _v(px, bed_top + 0.1 * h, bed_z)
        recline = float(rng.uniform(0.9, 1.2)) + wobble
        neck, head, shoulders = _upper_body(pelvis, -recline, 0.0, h)
        feet = (_v(px + 0.45 * h, bed_top + 0.06, bed_z - 0.12), _v(px + 0.45 * h, bed_top + 0.06, bed_z + 0.12))
        knees = tuple(pelvis + (f - pelvis) * 0.5 + _v(0.0, 0.1 * h, 0.0) for f in feet)
        elbows, hands = _hanging_arms(shoulders, h)
        return Skeleton(pelvis, neck, head, knees, feet, shoulders, elbows, hands, h)

    if label == 2:
        # ベッドから起き上がる: ベッド端に直立して座り、脚を床へ下ろす
        px = float(bed.hi[0] - rng.uniform(0.1, 0.2)) if actor is None else actor.x
        pelvis = _v(px, bed_top + 0.05 * h, bed_z + 0.15)
        neck, head, shoulders = _upper_body(pelvis, wobble, -0.05, h)
        knees = (pelvis + _v(0.18 * h, 0.0, -0.06 * h), pelvis + _v(0.18 * h, 0.0, 0.06 * h))
        feet = tuple(k + _v(0.04 * h, -(bed_top + 0.05 * h) + 0.02, 0.0) for k in knees)
        elbows, hands = _hanging_arms(shoulders, h)
        return Skeleton(pelvis, neck, head, knees, feet, shoulders, elbows, hands, h)

    if label == 3:
        # 椅子に座りかけ: 座面の上で中腰、上体を前傾
        px = seat_x + float(rng.uniform(-0.05, 0.05)) if actor is None else actor.x
        pelvis = _v(px, seat.hi[1] + 0.12 * h, seat_z)
        neck, head, shoulders = _upper_body(pelvis, 0.0, 0.5 + wobble, h)
        knees = (pelvis + _v(-0.07 * h, -0.08 * h, 0.2 * h), pelvis + _v(0.07 * h, -0.08 * h, 0.2 * h))
        feet = tuple(_v(k[0], 0.02, k[2] + 0.02) for k in knees)
        elbows, hands = _hanging_arms(shoulders, h, swing=0.5)
        return Skeleton(pelvis, neck, head, knees, feet, shoulders, elbows, hands, h)

    # label 4: 椅子から立ち上がる: 椅子の横でほぼ直立、片手を座面へ
    base = actor or ActorParams(x=float(seat.lo[0] - rng.uniform(0.25, 0.35)), z=float(seat_z + 0.1), height=h)
    skeleton = standing_skeleton(base, lean=0.25 + wobble)
    hand = _v(seat.lo[0] + 0.05, seat.hi[1] + 0.05, seat_z)
    skeleton.elbows = (skeleton.elbows[0], (skeleton.shoulders[1] + hand) / 2.0 + _v(0.05, 0.0, 0.0))
    skeleton.hands = (skeleton.hands[0], hand)
    return skeleton


def _generic_layout(rng: np.random.Generator) -> Layout:
    """一般的な室内: 棚・テーブル・箱をランダムに置く"""
    furniture: List[object] = []
    shelf_x = float(rng.uniform(-2.0, -0.8))
    furniture.append(Box((shelf_x, 0.0, 0.0), (shelf_x + float(rng.uniform(0.6, 1.0)), float(rng.uniform(1.2, 2.0)), 0.35)))
    table_x = float(rng.uniform(0.2, 1.0))
    table_z = float(rng.uniform(0.4, 1.2))
    furniture.append(Box((table_x, 0.7, table_z), (table_x + 0.9, 0.75, table_z + 0.6)))
    furniture.append(Box((table_x + 0.05, 0.0, table_z + 0.05), (table_x + 0.85, 0.7, table_z + 0.1)))
    for _ in range(int(rng.integers(0, 3))):
        bx = float(rng.uniform(-1.8, 1.5))
        bz = float(rng.uniform(0.2, 1.8))
        side = float(rng.uniform(0.2, 0.5))
        furniture.append(Box((bx, 0.0, bz), (bx + side, side, bz + side)))
    return Layout(furniture=furniture)


def _generic_actor(rng: np.random.Generator, jitter: np.random.Generator) -> Skeleton:
    """立つ・歩く・かがむのいずれか"""
    base = ActorParams(
        x=float(rng.uniform(-1.5, 1.5)),
        z=float(rng.uniform(0.6, 2.0)),
        height=_sample_height(rng),
        phase=float(rng.uniform(0.0, 1.0))
    )
    stride = math.sin(2.0 * math.pi * base.phase) * float(rng.uniform(0.0, 1.0))
    lean = float(rng.choice([0.0, 0.3, 0.6])) + float(jitter.uniform(-0.05, 0.05))
    return standing_skeleton(base, stride=stride, lean=lean)


def sr_corpus_family(spec: SceneSpec) -> str:
    """SR コーパスのシーンが描く系統（手指衛生・ICU・一般的な室内）"""
    instance_seed = spec.seed if spec.instance_seed is None else spec.instance_seed
    return _draw_family(np.random.default_rng([instance_seed, _STREAM_LAYOUT]))


def _draw_family(rng: np.random.Generator) -> str:
    return SR_CORPUS_FAMILIES[int(rng.integers(0, len(SR_CORPUS_FAMILIES)))]


def _sr_corpus_scene(family: str, rng: np.random.Generator, jitter: np.random.Generator) -> Tuple[Layout, Optional[Skeleton]]:
    if family == FAMILY_GENERIC:
        layout = _generic_layout(rng)
        skeleton = _generic_actor(rng, jitter)
    elif family == Task.HAND_HYGIENE.value:
        layout = _hand_hygiene_layout(rng)
        label = int(rng.integers(0, 2))
        skeleton = _hand_hygiene_actor(label, layout, rng, jitter, None)
    else:
        layout = _icu_layout(rng)
        label = int(rng.integers(0, 5))
        skeleton = _icu_actor(label, layout, rng, jitter, None)
    present = rng.random() < 0.85
    return layout, skeleton if present else None


def render_depth(primitives: Sequence[object], camera: Camera, size: int) -> np.ndarray:
    """
    プリミティブ群の z 深度マップ（m、交点なしは inf）
    """
    origin = np.asarray(camera.position, dtype=np.float64)
    dirs = camera.rays(size)
    depth = np.full(dirs.shape[0], np.inf)
    for primitive in primitives:
        depth = np.minimum(depth, primitive.intersect(origin, dirs))
    return depth.reshape(size, size)


def _apply_sensor(depth_m: np.ndarray, spec: SceneSpec, sensor: np.random.Generator) -> np.ndarray:
    """ノイズとスペックルを加えて mm の uint16 にエンコード（範囲外は 0）"""
    lo, hi = spec.depth_range
    noise = sensor.normal(0.0, 1.0, size=depth_m.shape) * spec.noise_sigma_m
    dropout = sensor.random(depth_m.shape) < spec.dropout_rate
    valid = np.isfinite(depth_m) & (depth_m >= lo) & (depth_m <= hi) & ~dropout
    noisy = np.clip(np.where(valid, depth_m, lo) + noise, lo, hi)
    mm_lo = int(round(lo * DepthConstants.MM_PER_METER))
    mm_hi = int(round(hi * DepthConstants.MM_PER_METER))
    raw = np.clip(np.rint(noisy * DepthConstants.MM_PER_METER), mm_lo, mm_hi)
    return np.where(valid, raw, DepthConstants.NO_RETURN).astype(np.uint16)


def gen_scene(spec: SceneSpec) -> Tuple[DepthFrame, Optional[int]]:
    """
    シーンをレンダリング

    Returns:
        Tuple[DepthFrame, Optional[int]]: 生の uint16 フレーム（mm、0 は無反射）とラベル

    Raises:
        ConfigurationError: 仕様が不正
    """
    spec.validate()
    instance_seed = spec.seed if spec.instance_seed is None else spec.instance_seed
    layout_rng = np.random.default_rng([instance_seed, _STREAM_LAYOUT])
    actor_rng = np.random.default_rng([instance_seed, _STREAM_ACTOR])
    jitter = np.random.default_rng([spec.seed, _STREAM_JITTER])
    sensor = np.random.default_rng([spec.seed, _STREAM_SENSOR])

    skeleton: Optional[Skeleton] = None
    if spec.task == Task.HAND_HYGIENE.value:
        layout = _hand_hygiene_layout(layout_rng)
        if spec.actor_present:
            skeleton = _hand_hygiene_actor(int(spec.label), layout, actor_rng, jitter, spec.actor)
    elif spec.task == Task.ICU.value:
        layout = _icu_layout(layout_rng)
        if spec.actor_present:
            skeleton = _icu_actor(int(spec.label), layout, actor_rng, jitter, spec.actor)
    else:
        layout, skeleton = _sr_corpus_scene(_draw_family(layout_rng), layout_rng, jitter)
        if not spec.actor_present:
            skeleton = None

    primitives = _room() + list(layout.furniture)
    if skeleton is not None:
        primitives += skeleton.primitives()
    camera = TOP_DOWN_CAMERA if spec.view == VIEW_TOP_DOWN else SIDE_CAMERA
    depth_m = render_depth(primitives, camera, spec.size)
    raw = _apply_sensor(depth_m, spec, sensor)
    frame = DepthFrame(raw, depth_range=tuple(spec.depth_range), provenance=Provenance.SYNTHETIC)
    return frame, spec.label


def render_background(spec: SceneSpec) -> DepthFrame:
    """同じシードで人物を除いたシーン"""
    frame, _ = gen_scene(replace(spec, actor_present=False))
    return frame
