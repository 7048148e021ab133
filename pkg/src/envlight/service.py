"""Session-based HTTP service for the interactive light-editing loop.

Each session holds an uploaded panorama texture and an editable light set
with a monotonically increasing revision.  Mutations (upload, fit, light
CRUD) are serialized per session and bump the revision exactly once per
accepted request; reads snapshot the state and render outside the lock.
Optimistic concurrency: send ``If-Match: <revision>`` with a mutation to get
409 on a stale revision; without it, last writer wins.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .errors import (
    DimensionError,
    DomainError,
    EnvlightError,
    NotFoundError,
    ParseError,
    ValidationError,
)
from .fitting import FitOptions, fit
from .geometry import EnvMap, resize_env
from .hdrio import _decode_hdr_bytes, _decode_pfm_bytes, _hdr_bytes, encode_png_bytes
from .render import RenderConfig, preset_scene, render_scene, tonemap
from .sg import EditOp, SgSet, apply_edit, parse_lights, relight_composite, render_sg_map, serialize_lights

__all__ = ["create_app"]

DEFAULT_MAX_UPLOAD = 64 * 1024 * 1024
DEFAULT_TTL_SECONDS = 24 * 3600
_PREVIEW_CACHE_SIZE = 16


@dataclass
class Session:
    session_id: str
    texture: EnvMap | None = None
    lights: SgSet = field(default_factory=SgSet)
    revision: int = 0
    created_at: float = field(default_factory=time.time)
    last_access: float = field(default_factory=time.time)
    lock: threading.RLock = field(default_factory=threading.RLock)
    preview_cache: OrderedDict = field(default_factory=OrderedDict)


class SessionStore:
    def __init__(self, data_dir: str | None, ttl_seconds: float):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._ttl = ttl_seconds
        self._data_dir = Path(data_dir) if data_dir else None
        if self._data_dir:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    def create(self) -> Session:
        self._evict_idle()
        session = Session(session_id=secrets.token_hex(8))
        with self._lock:
            self._sessions[session.session_id] = session
        self.persist(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None or time.time() - session.last_access > self._ttl:
            if session is not None:
                self._drop(session_id)
            raise NotFoundError(f"unknown session {session_id!r}")
        session.last_access = time.time()
        return session

    def _drop(self, session_id: str):
        with self._lock:
            self._sessions.pop(session_id, None)

    def _evict_idle(self):
        now = time.time()
        with self._lock:
            stale = [k for k, s in self._sessions.items() if now - s.last_access > self._ttl]
            for k in stale:
                del self._sessions[k]

    # --- optional disk persistence -------------------------------------
    def persist(self, session: Session, texture_changed: bool = False):
        if self._data_dir is None:
            return
        root = self._data_dir / session.session_id
        root.mkdir(parents=True, exist_ok=True)
        (root / "lights.json").write_text(serialize_lights(session.lights))
        (root / "meta.json").write_text(
            json.dumps(
                {
                    "revision": session.revision,
                    "created_at": session.created_at,
                    "last_access": session.last_access,
                }
            )
        )
        if texture_changed and session.texture is not None:
            (root / "texture.hdr").write_bytes(_hdr_bytes(session.texture.data))

    def _restore(self):
        for root in sorted(self._data_dir.iterdir()):
            if not root.is_dir():
                continue
            try:
                meta = json.loads((root / "meta.json").read_text())
                session = Session(session_id=root.name)
                session.revision = int(meta.get("revision", 0))
                session.created_at = float(meta.get("created_at", time.time()))
                session.last_access = float(meta.get("last_access", time.time()))
                session.lights = parse_lights((root / "lights.json").read_text())
                texture_path = root / "texture.hdr"
                if texture_path.exists():
                    session.texture = EnvMap(_decode_hdr_bytes(texture_path.read_bytes()))
            except (OSError, EnvlightError, ValueError):
                continue  # skip unreadable session directories
            if time.time() - session.last_access <= self._ttl:
                self._sessions[session.session_id] = session


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def _light_json(light) -> dict:
    return {
        "id": light.id,
        "color": list(light.color),
        "direction": list(light.direction),
        "sigma": light.sigma,
    }


def _lights_payload(session: Session) -> dict:
    return {
        "lights": [_light_json(l) for l in session.lights],
        "revision": session.revision,
    }


def _check_if_match(request: Request, session: Session):
    """Raise 409 (as a response) when a stale If-Match revision is supplied."""
    header = request.headers.get("if-match")
    if header is None:
        return None
    try:
        expected = int(header.strip().strip('"'))
    except ValueError:
        return _error(400, f"If-Match must be an integer revision, got {header!r}")
    if expected != session.revision:
        return _error(409, f"revision conflict: expected {expected}, current {session.revision}")
    return None


async def _read_json(request: Request):
    body = await request.body()
    if not body:
        return {}
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON body: {exc.msg}", offset=exc.pos) from exc


def _require_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number")
    return float(value)


def _require_triple(value, name: str):
    if not (isinstance(value, list) and len(value) == 3):
        raise ValidationError(f"{name} must be a 3-element array")
    return tuple(_require_number(v, name) for v in value)


def create_app(
    data_dir: str | None = None,
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD,
    session_ttl: float = DEFAULT_TTL_SECONDS,
) -> FastAPI:
    """Build the service; sessions live in memory, optionally mirrored to disk."""
    app = FastAPI(title="envlight", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(data_dir, session_ttl)
    app.state.store = store

    @app.exception_handler(EnvlightError)
    async def _handle_package_errors(request: Request, exc: EnvlightError):
        if isinstance(exc, NotFoundError):
            return _error(404, str(exc))
        return _error(400, str(exc))

    # --- session lifecycle ----------------------------------------------
    @app.post("/api/sessions", status_code=201)
    def create_session():
        session = store.create()
        return {"id": session.session_id}

    @app.post("/api/sessions/{sid}/panorama")
    async def upload_panorama(sid: str, request: Request):
        session = store.get(sid)
        declared = request.headers.get("content-length")
        if declared is not None and int(declared) > max_upload_bytes:
            return _error(413, f"payload exceeds {max_upload_bytes} bytes")
        body = await request.body()
        if len(body) > max_upload_bytes:
            return _error(413, f"payload exceeds {max_upload_bytes} bytes")
        if body.startswith(b"PF"):
            data = _decode_pfm_bytes(body)
        else:
            data = _decode_hdr_bytes(body)
        env = EnvMap(data)
        with session.lock:
            conflict = _check_if_match(request, session)
            if conflict:
                return conflict
            session.texture = env
            session.revision += 1
            session.preview_cache.clear()
            store.persist(session, texture_changed=True)
            return {"width": env.width, "height": env.height, "revision": session.revision}

    # --- fitting ----------------------------------------------------------
    @app.post("/api/sessions/{sid}/fit")
    async def fit_lights(sid: str, request: Request):
        session = store.get(sid)
        overrides = await _read_json(request)
        if not isinstance(overrides, dict):
            return _error(400, "fit options must be a JSON object")
        valid = {f.name for f in FitOptions.__dataclass_fields__.values()}
        unknown = set(overrides) - valid
        if unknown:
            return _error(400, f"unknown fit options: {sorted(unknown)}")
        opts = FitOptions(**overrides)
        with session.lock:
            conflict = _check_if_match(request, session)
            if conflict:
                return conflict
            if session.texture is None:
                return _error(400, "no panorama uploaded for this session")
            lights, _ = fit(session.texture, opts)
            session.lights = lights
            session.revision += 1
            session.preview_cache.clear()
            store.persist(session)
            return _lights_payload(session)

    # --- light CRUD --------------------------------------------------------
    @app.get("/api/sessions/{sid}/lights")
    def get_lights(sid: str):
        session = store.get(sid)
        with session.lock:
            return _lights_payload(session)

    @app.post("/api/sessions/{sid}/lights", status_code=201)
    async def add_light(sid: str, request: Request):
        session = store.get(sid)
        obj = await _read_json(request)
        if not isinstance(obj, dict):
            return _error(400, "light must be a JSON object")
        unknown = set(obj) - {"color", "direction", "sigma"}
        if unknown:
            return _error(400, f"unknown light fields: {sorted(unknown)}")
        op = EditOp(
            kind="add",
            color=_require_triple(obj.get("color"), "color"),
            direction=_require_triple(obj.get("direction"), "direction"),
            sigma=_require_number(obj.get("sigma"), "sigma"),
        )
        with session.lock:
            conflict = _check_if_match(request, session)
            if conflict:
                return conflict
            new_id = session.lights.next_id()
            session.lights = apply_edit(session.lights, op)
            session.revision += 1
            session.preview_cache.clear()
            store.persist(session)
            return {"id": new_id, "revision": session.revision}

    @app.patch("/api/sessions/{sid}/lights/{light_id}")
    async def patch_light(sid: str, light_id: int, request: Request):
        session = store.get(sid)
        obj = await _read_json(request)
        if not isinstance(obj, dict):
            return _error(400, "patch must be a JSON object")
        unknown = set(obj) - {"color", "direction", "sigma", "scale"}
        if unknown:
            return _error(400, f"unknown patch fields: {sorted(unknown)}")
        ops = []
        if "color" in obj:
            ops.append(EditOp("set_color", target=light_id, color=_require_triple(obj["color"], "color")))
        if "direction" in obj:
            ops.append(
                EditOp("set_direction", target=light_id, direction=_require_triple(obj["direction"], "direction"))
            )
        if "sigma" in obj:
            ops.append(EditOp("set_bandwidth", target=light_id, sigma=_require_number(obj["sigma"], "sigma")))
        if "scale" in obj:
            ops.append(EditOp("scale_intensity", target=light_id, factor=_require_number(obj["scale"], "scale")))
        if not ops:
            return _error(400, "patch must set at least one of color/direction/sigma/scale")
        with session.lock:
            conflict = _check_if_match(request, session)
            if conflict:
                return conflict
            lights = session.lights
            for op in ops:  # all-or-nothing: apply onto a scratch copy first
                lights = apply_edit(lights, op)
            session.lights = lights
            session.revision += 1
            session.preview_cache.clear()
            store.persist(session)
            return {"light": _light_json(session.lights.get(light_id)), "revision": session.revision}

    @app.delete("/api/sessions/{sid}/lights/{light_id}", status_code=204)
    async def delete_light(sid: str, light_id: int, request: Request):
        session = store.get(sid)
        with session.lock:
            conflict = _check_if_match(request, session)
            if conflict:
                return conflict
            session.lights = apply_edit(session.lights, EditOp("remove", target=light_id))
            session.revision += 1
            session.preview_cache.clear()
            store.persist(session)
        return Response(status_code=204)

    # --- rendering ----------------------------------------------------------
    def _composited(session: Session, height: int) -> EnvMap:
        texture = resize_env(session.texture, height)
        light_map = render_sg_map(session.lights, height)
        return relight_composite(texture, light_map)

    @app.get("/api/sessions/{sid}/preview")
    def preview(sid: str, width: int | None = None, exposure: float = 1.0, gamma: float = 2.2):
        session = store.get(sid)
        with session.lock:
            if session.texture is None:
                return _error(400, "no panorama uploaded for this session")
            if width is None:
                width = session.texture.width
            if width < 16 or width % 2 != 0:
                return _error(400, f"width must be an even integer >= 16, got {width}")
            if exposure <= 0 or gamma <= 0:
                return _error(400, "exposure and gamma must be positive")
            key = (session.revision, width, exposure, gamma)
            cached = session.preview_cache.get(key)
            snapshot = (session.texture, session.lights)
        if cached is None:
            texture, lights = snapshot
            env = relight_composite(
                resize_env(texture, width // 2), render_sg_map(lights, width // 2)
            )
            cached = encode_png_bytes(tonemap(env.data, exposure, gamma))
            with session.lock:
                session.preview_cache[key] = cached
                while len(session.preview_cache) > _PREVIEW_CACHE_SIZE:
                    session.preview_cache.popitem(last=False)
        return Response(content=cached, media_type="image/png")

    @app.get("/api/sessions/{sid}/render")
    def render(sid: str, scene: str = "spheres9_top", width: int = 128, height: int = 128):
        session = store.get(sid)
        with session.lock:
            if session.texture is None:
                return _error(400, "no panorama uploaded for this session")
            if not (8 <= width <= 1024 and 8 <= height <= 1024):
                return _error(400, "render size must lie in [8, 1024]")
            env = _composited(session, session.texture.height)
        spec = preset_scene(scene)
        cfg = RenderConfig(width=width, height=height)
        image = render_scene(env, spec, cfg)
        png = encode_png_bytes(tonemap(image, cfg.exposure, cfg.gamma))
        return Response(content=png, media_type="image/png")

    @app.get("/api/sessions/{sid}/envmap.hdr")
    def envmap(sid: str):
        session = store.get(sid)
        with session.lock:
            if session.texture is None:
                return _error(400, "no panorama uploaded for this session")
            env = _composited(session, session.texture.height)
        return Response(content=_hdr_bytes(env.data), media_type="image/vnd.radiance")

    return app
