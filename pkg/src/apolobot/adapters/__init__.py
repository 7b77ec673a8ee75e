"""Chat-platform bindings: the shared contract, an in-memory simulated
binding, and the Discord REST binding."""

from .base import (  # noqa: F401
    ACTION_TOKENS,
    ActionSpec,
    ButtonPressed,
    CommandInvoked,
    InboundInteraction,
    ModalSubmitted,
    Platform,
    RouteResult,
    build_custom_id,
    parse_custom_id,
)
