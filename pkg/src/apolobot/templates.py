"""Message templates rendered by the platform adapters.

Communities may override any template via config; validation checks that
overrides keep the placeholders the workflow substitutes into them.
"""

from __future__ import annotations

import string

#: template id -> placeholders the renderer will substitute.
REQUIRED_PLACEHOLDERS: dict[str, frozenset[str]] = {
    "victim_prompt": frozenset({"victim_name", "offender_name", "reason", "duration"}),
    "offender_prompt": frozenset({"offender_name", "victim_name", "request_text"}),
    "forward_apology": frozenset({"victim_name", "response_text"}),
    "unmute_offer": frozenset({"offender_name", "victim_name"}),
    "log_update": frozenset({"victim_name", "offender_name"}),
}

DEFAULT_TEMPLATES: dict[str, str] = {
    "victim_prompt": (
        "{offender_name} has been muted for {duration} (reason: {reason}). "
        "{victim_name}, would you like to request an apology? If the process "
        "completes, the mute may be lifted early."
    ),
    "offender_prompt": (
        "{offender_name}, {victim_name} has requested an apology:\n"
        "> {request_text}\n"
        "Would you like to respond with an apology? An appropriate apology "
        "can lift your mute early."
    ),
    "forward_apology": (
        "{victim_name}, the offender sent this apology:\n"
        "> {response_text}\n"
        "Do you accept it?"
    ),
    "unmute_offer": (
        "Everyone approved: {victim_name} accepted the apology from "
        "{offender_name}. A moderator can unmute the offender now."
    ),
    "log_update": "Case update for {victim_name} vs {offender_name}.",
}


def render(templates: dict[str, str] | None, template_id: str, params: dict[str, str]) -> str:
    """Render ``template_id`` with ``params``, falling back to the defaults."""
    text = (templates or {}).get(template_id) or DEFAULT_TEMPLATES[template_id]
    return text.format(**params)


def validate_templates(overrides: dict[str, str]) -> list[str]:
    """Return human-readable problems with template overrides (empty if fine)."""
    problems = []
    fmt = string.Formatter()
    for template_id, text in overrides.items():
        required = REQUIRED_PLACEHOLDERS.get(template_id)
        if required is None:
            problems.append(f"unknown template id {template_id!r}")
            continue
        seen = {name for _, name, _, _ in fmt.parse(text) if name}
        missing = required - seen
        if missing:
            problems.append(
                f"template {template_id!r} missing placeholders: {', '.join(sorted(missing))}"
            )
    return problems
