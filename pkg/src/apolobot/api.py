"""HTTP/JSON control surface for operators, tests, and the role-play console.

All bodies use snake_case keys and RFC 3339 UTC timestamps. Mutations
require a bearer token with scope ``sim`` or higher; moderator actions
require ``moderate``. The sim endpoints exist for simulated communities
only and are disabled when a real platform binding is active (unless the
operator opts in with ``--allow-sim``).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Any, Mapping

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__, metrics
from .adapters.base import ACTION_TOKENS, actor_role
from .adapters.sim import ActorProfiles
from .errors import (
    ApoloError,
    BadDuration,
    IllegalEvent,
    NotModerator,
    SelfTarget,
    StaleInteraction,
    TerminalCase,
    Unauthorized,
    UnknownCase,
    VersionConflict,
)
from .model import CaseState, EventKind, from_rfc3339, to_rfc3339
from .service import MediationService

SCOPE_LEVELS = {"read": 0, "sim": 1, "moderate": 2}

MODERATOR_ACTIONS = frozenset(
    token for token, spec in ACTION_TOKENS.items() if spec.role == "moderator"
)


@dataclass
class ApiRuntime:
    service: MediationService
    token_scopes: Mapping[str, str]
    sim_enabled: bool = True

    def scope_for(self, token: str | None) -> str | None:
        if token is None:
            return None
        return self.token_scopes.get(token)


class CommunityBody(BaseModel):
    profiles: dict[str, Any] = Field(default_factory=dict)
    config: dict[str, Any] = Field(default_factory=dict)
    name: str | None = None


class SimCaseBody(BaseModel):
    community_id: str
    offender: str
    victim: str
    duration: str
    reason: str
    proof: str | None = None
    review_request: bool = False
    moderator: str | None = None


class ActionBody(BaseModel):
    action: str
    actor: str
    text: str | None = None


def parse_window(window: str | None) -> tuple[datetime | None, datetime | None]:
    """``start..end`` with RFC 3339 bounds, either side optional."""
    if not window:
        return None, None
    if ".." not in window:
        raise HTTPException(422, "window must look like <start>..<end>")
    start_s, _, end_s = window.partition("..")
    try:
        start = from_rfc3339(start_s) if start_s else None
        end = from_rfc3339(end_s) if end_s else None
    except ValueError as exc:
        raise HTTPException(422, f"bad window bound: {exc}") from exc
    return start, end


def create_app(runtime: ApiRuntime) -> FastAPI:
    app = FastAPI(title="apolobot", version=__version__)
    service = runtime.service

    def authorize(required: str):
        def dependency(authorization: str | None = Header(default=None)) -> str:
            token = None
            if authorization and authorization.lower().startswith("bearer "):
                token = authorization[7:].strip()
            scope = runtime.scope_for(token)
            if scope is None:
                raise HTTPException(401, "missing or unknown bearer token")
            if SCOPE_LEVELS[scope] < SCOPE_LEVELS[required]:
                raise HTTPException(403, f"scope {scope} cannot perform {required} calls")
            return scope

        return Depends(dependency)

    @app.exception_handler(ApoloError)
    def domain_errors(_request: Request, exc: ApoloError):
        status = 500
        if isinstance(exc, UnknownCase):
            status = 404
        elif isinstance(exc, Unauthorized):
            status = 403
        elif isinstance(exc, (StaleInteraction, VersionConflict, IllegalEvent, TerminalCase)):
            status = 409
        elif isinstance(exc, (SelfTarget, BadDuration, NotModerator)):
            status = 422
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    def value_errors(_request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    # -- inspection -------------------------------------------------------------

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.get("/v1/cases")
    def list_cases(
        state: str | None = None,
        offender: str | None = None,
        community: str | None = None,
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=50, ge=1, le=500),
        _scope: str = authorize("read"),
    ):
        result = service.store.list_cases(
            community=community, state=state, offender=offender,
            page=page, page_size=page_size,
        )
        return {
            "page": result.page,
            "page_size": result.page_size,
            "total": result.total,
            "items": [s.to_dict() for s in result.items],
        }

    def case_detail(case) -> dict:
        body = case.to_dict()
        if case.terminal:
            body["outcome"] = metrics.classify_outcome(case).to_dict()
        body["pending_actions"] = [
            {"action": token, "role": spec.role, "label": spec.label,
             "opens_modal": spec.opens_modal}
            for token, spec in ACTION_TOKENS.items()
            if not case.terminal and spec.stage is case.state
        ]
        return body

    @app.get("/v1/cases/{case_id}")
    def get_case(case_id: str, _scope: str = authorize("read")):
        case, _version = service.store.load_or_raise(case_id)
        return case_detail(case)

    @app.get("/v1/cases/{case_id}/events")
    def get_events(case_id: str, _scope: str = authorize("read")):
        events = service.store.events(case_id)
        if not events:
            raise UnknownCase(case_id)
        return {
            "case_id": case_id,
            "events": [
                {
                    "seq": e.event_seq,
                    "at": to_rfc3339(e.occurred_at),
                    "actor": e.actor,
                    "kind": e.kind.value,
                    "payload": dict(e.payload),
                }
                for e in events
            ],
        }

    # -- simulated communities ------------------------------------------------------

    def require_sim():
        if not runtime.sim_enabled:
            raise HTTPException(
                403, "sim endpoints are disabled while a real binding is active"
            )

    @app.post("/v1/sim/communities")
    def create_community(body: CommunityBody, _scope: str = authorize("sim")):
        require_sim()
        profiles = ActorProfiles.from_dict(body.profiles) if body.profiles else None
        record = service.communities.create_simulated(
            profiles=profiles, config_overrides=body.config, name=body.name
        )
        return {"community_id": record.community_id,
                "moderators": list(record.moderators)}

    @app.post("/v1/sim/cases")
    def open_sim_case(body: SimCaseBody, _scope: str = authorize("sim")):
        require_sim()
        record = service.communities.get(body.community_id)
        if record is None or not record.simulated:
            raise HTTPException(404, f"unknown simulated community {body.community_id}")
        moderator = body.moderator or (record.moderators[0] if record.moderators else "mod-1")
        case = service.open_case(
            community_id=body.community_id,
            offender_id=body.offender,
            victim_id=body.victim,
            moderator_id=moderator,
            duration=body.duration,
            reason=body.reason,
            proof_ref=body.proof,
            review_request=body.review_request,
        )
        return {"case_id": case.case_id, "state": case.state.value}

    # -- role-play actions ------------------------------------------------------------

    @app.post("/v1/cases/{case_id}/actions")
    def act(case_id: str, body: ActionBody,
            authorization: str | None = Header(default=None)):
        spec = ACTION_TOKENS.get(body.action)
        if spec is None:
            raise HTTPException(422, f"unknown action token {body.action!r}")
        # moderator actions demand the higher scope
        required = "moderate" if body.action in MODERATOR_ACTIONS else "sim"
        token = None
        if authorization and authorization.lower().startswith("bearer "):
            token = authorization[7:].strip()
        scope = runtime.scope_for(token)
        if scope is None:
            raise HTTPException(401, "missing or unknown bearer token")
        if SCOPE_LEVELS[scope] < SCOPE_LEVELS[required]:
            raise HTTPException(403, f"scope {scope} cannot perform {required} calls")

        case, _version = service.store.load_or_raise(case_id)
        config = service.communities.config_for(case.community_id)
        roles = service.communities.roles_for(case.community_id, body.actor)
        role = actor_role(case, config, body.actor, roles)
        if role != spec.role:
            raise Unauthorized(f"{body.action} is not {role}'s decision")
        if case.terminal or case.state is not spec.stage:
            raise StaleInteraction(
                f"case is in {case.state.value}; {body.action} belongs to {spec.stage.value}"
            )
        payload: dict[str, Any] = {}
        if spec.opens_modal:
            if not body.text:
                raise HTTPException(422, f"action {body.action} requires text")
            payload = {"text": body.text}
        try:
            updated = service.submit(case_id, spec.event_kind, body.actor, payload)
        except (IllegalEvent, TerminalCase) as exc:
            raise StaleInteraction(str(exc)) from exc
        return case_detail(updated)

    # -- metrics -------------------------------------------------------------------------

    @app.get("/v1/metrics/funnel")
    def funnel_report(window: str | None = None, community: str | None = None,
                      _scope: str = authorize("read")):
        start, end = parse_window(window)
        cases = [
            c for c in service.store.all_cases()
            if c.terminal
            and (community is None or c.community_id == community)
            and (start is None or c.created_at >= start)
            and (end is None or c.created_at < end)
        ]
        return metrics.funnel(cases).to_dict()

    @app.get("/v1/metrics/recidivism")
    def recidivism_count(user: str, window: str | None = None,
                         _scope: str = authorize("read")):
        start, end = parse_window(window)
        count = metrics.recidivism(service.store.all_cases(), user, start, end)
        return {"user": user, "count": count}

    return app
