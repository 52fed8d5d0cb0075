"""Per-speaker character analysis through a chat-completion endpoint.

A speaker's dossier is rendered into a deterministic six-question prompt
(question 6 always asks the model to name the film — the recognition
probe) and sent to a pluggable backend.  Responses are parsed back into
structured character cards; the verbatim response is always retained so
generated content stays auditable.

The exact production prompt is configuration, not code: the default
template below covers personality traits, behavior in interactions,
goals, relationships, linguistic style, and film identification, and can
be replaced wholesale from a template file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .dialog import SpeakerDossier

logger = logging.getLogger(__name__)

DEFAULT_CREDENTIAL_ENV = "FILMVOICES_API_KEY"
DEFAULT_MODEL_ID = "gpt-3.5-turbo-0125"
RETRY_BACKOFF_S = (1.0, 2.0, 4.0)

DEFAULT_SYSTEM_TEXT = (
    "Du bist ein Experte für psycholinguistische Figurenanalyse. Du erhältst "
    "sämtliche Redebeiträge einer einzelnen Filmfigur in zeitlicher "
    "Reihenfolge, ohne Angaben zu anderen Figuren. Beantworte die folgenden "
    "Fragen ausschließlich auf Grundlage dieser Redebeiträge und nummeriere "
    "deine Antworten von 1 bis 6."
)

DEFAULT_QUESTIONS = (
    "Welche Persönlichkeitsmerkmale zeigt die Figur? Nenne sie als Liste.",
    "Wie verhält sich die Figur in Interaktionen mit anderen? Nenne die "
    "Verhaltensweisen als Liste.",
    "Welche Ziele und Motive verfolgt die Figur? Nenne sie als Liste.",
    "Welche Beziehungen zu anderen Figuren lassen sich erkennen? Nenne sie "
    "als Liste.",
    "Wie lässt sich der sprachliche Stil der Figur charakterisieren?",
    "Aus welchem Film stammen diese Redebeiträge? Nenne den Filmtitel.",
)


class BackendError(RuntimeError):
    """Unrecoverable backend failure (after retries, if applicable)."""


class TransientBackendError(BackendError):
    """Retryable transport failure: timeouts, 5xx, connection resets."""


class AuthenticationError(BackendError):
    """Credential problem; names the environment variable to fix."""


@dataclass(frozen=True)
class PromptTemplate:
    """Six-question analysis prompt; question 6 is the recognition probe."""

    system_text: str = DEFAULT_SYSTEM_TEXT
    question_list: tuple[str, ...] = DEFAULT_QUESTIONS
    language: str = "de"
    token_budget: int = 12000

    def __post_init__(self) -> None:
        if len(self.question_list) != 6:
            raise ValueError(
                f"template needs exactly 6 questions, got {len(self.question_list)}"
            )
        if "film" not in self.question_list[5].lower():
            raise ValueError("question 6 must ask the model to identify the film")
        if self.token_budget < 1:
            raise ValueError("token_budget must be positive")

    @classmethod
    def from_file(cls, path) -> "PromptTemplate":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        return cls(
            system_text=raw.get("system_text", DEFAULT_SYSTEM_TEXT),
            question_list=tuple(raw.get("questions", DEFAULT_QUESTIONS)),
            language=raw.get("language", "de"),
            token_budget=int(raw.get("token_budget", 12000)),
        )


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str
    truncated: bool
    prompt_hash: str


@dataclass(frozen=True)
class CharacterCard:
    """Structured analysis of one speaker, plus the verbatim response."""

    speaker: str
    traits: tuple[str, ...]
    goals: tuple[str, ...]
    interactions: tuple[str, ...]
    film_guess: str
    raw_response: str
    model_id: str
    prompt_hash: str
    parse_failed: bool = False
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker,
            "traits": list(self.traits),
            "goals": list(self.goals),
            "interactions": list(self.interactions),
            "film_guess": self.film_guess,
            "raw_response": self.raw_response,
            "model_id": self.model_id,
            "prompt_hash": self.prompt_hash,
            "parse_failed": self.parse_failed,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CharacterCard":
        return cls(
            speaker=raw["speaker"],
            traits=tuple(raw["traits"]),
            goals=tuple(raw["goals"]),
            interactions=tuple(raw["interactions"]),
            film_guess=raw["film_guess"],
            raw_response=raw["raw_response"],
            model_id=raw["model_id"],
            prompt_hash=raw["prompt_hash"],
            parse_failed=raw.get("parse_failed", False),
            truncated=raw.get("truncated", False),
        )


def estimate_tokens(text: str) -> int:
    # Coarse 4-characters-per-token heuristic; only used for budgeting.
    return math.ceil(len(text) / 4)


def render_prompt(dossier: SpeakerDossier, template: PromptTemplate) -> RenderedPrompt:
    """Render the (system, user) message pair for one dossier.

    Rendering is deterministic: identical inputs give identical bytes and
    an identical hash.  When the token estimate exceeds the budget,
    utterances are dropped from the middle (earliest and latest are always
    kept) until the prompt fits.
    """
    if not dossier.utterances:
        raise ValueError(f"dossier for {dossier.speaker!r} has no utterances")
    questions = "\n".join(
        f"{i}. {q}" for i, q in enumerate(template.question_list, start=1)
    )
    system_text = f"{template.system_text}\n\n{questions}"

    texts = [text for _, _, text in dossier.utterances]
    truncated = False

    def user_text_for(lines: list[str]) -> str:
        return "\n".join(lines)

    overhead = estimate_tokens(system_text)
    while (
        len(texts) > 2
        and overhead + estimate_tokens(user_text_for(texts)) > template.token_budget
    ):
        del texts[len(texts) // 2]
        truncated = True

    user_text = user_text_for(texts)
    digest = hashlib.sha256()
    digest.update(system_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(user_text.encode("utf-8"))
    return RenderedPrompt(
        system_text=system_text,
        user_text=user_text,
        truncated=truncated,
        prompt_hash=digest.hexdigest(),
    )


_SECTION_RE = re.compile(r"^\s*([1-6])\s*[\.\):–-]\s*", re.MULTILINE)
_ITEM_SPLIT_RE = re.compile(r"[,\n;]|\bund\b")


def split_numbered_sections(text: str) -> dict[int, str]:
    """Split a response into its numbered answer sections (1-6)."""
    sections: dict[int, str] = {}
    matches = list(_SECTION_RE.finditer(text))
    for match, nxt in zip(matches, matches[1:] + [None]):
        end = nxt.start() if nxt is not None else len(text)
        number = int(match.group(1))
        if number not in sections:
            sections[number] = text[match.end() : end].strip()
    return sections


def _as_items(section: str) -> tuple[str, ...]:
    items = [
        item.strip(" \t•*-–").rstrip(".")
        for item in _ITEM_SPLIT_RE.split(section)
    ]
    return tuple(item for item in items if item)


def parse_card(
    speaker: str,
    response: str,
    model_id: str,
    prompt_hash: str,
    truncated: bool = False,
) -> CharacterCard:
    """Parse a six-section response into a card; keep the raw text verbatim."""
    sections = split_numbered_sections(response)
    parse_failed = any(n not in sections or not sections[n] for n in range(1, 7))
    return CharacterCard(
        speaker=speaker,
        traits=_as_items(sections.get(1, "")),
        goals=_as_items(sections.get(3, "")),
        interactions=_as_items(sections.get(2, "")),
        film_guess=" ".join(sections.get(6, "").split()),
        raw_response=response,
        model_id=model_id,
        prompt_hash=prompt_hash,
        parse_failed=parse_failed,
        truncated=truncated,
    )


class StubBackend:
    """Offline backend returning a canned response; counts its calls."""

    DEFAULT_RESPONSE = (
        "1. entschlossen, beharrlich, pflichtbewusst\n"
        "2. bestimmt gegenüber anderen, fordernd, mitunter fürsorglich\n"
        "3. Anerkennung gewinnen, die eigene Stellung sichern\n"
        "4. enge Bindung an die Familie, Spannungen mit Autoritäten\n"
        "5. knapper, direkter Satzbau mit gehobener Anrede\n"
        "6. Der Filmtitel lässt sich nicht bestimmen.\n"
    )

    model_id = "stub"

    def __init__(self, response: str | None = None):
        self.response = self.DEFAULT_RESPONSE if response is None else response
        self.calls = 0

    def complete(self, system_text: str, user_text: str) -> str:
        self.calls += 1
        return self.response


class HttpChatBackend:
    """Minimal chat-completion client (system + user in, assistant text out).

    Requests temperature 0 for reproducibility; the endpoint may still be
    nondeterministic, so nothing downstream asserts on live output.
    """

    def __init__(
        self,
        endpoint: str,
        model_id: str = DEFAULT_MODEL_ID,
        credential_env: str = DEFAULT_CREDENTIAL_ENV,
        timeout_s: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.credential_env = credential_env
        self.timeout_s = timeout_s

    def _api_key(self) -> str:
        import os

        key = os.environ.get(self.credential_env)
        if not key:
            raise AuthenticationError(
                f"no API credential: set the {self.credential_env} "
                "environment variable"
            )
        return key

    def complete(self, system_text: str, user_text: str) -> str:
        payload = json.dumps(
            {
                "model": self.model_id,
                "temperature": 0,
                "messages": [
                    {"role": "system", "content": system_text},
                    {"role": "user", "content": user_text},
                ],
            }
        ).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint,
            data=payload,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self._api_key()}",
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as response:
                body = json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise AuthenticationError(
                    f"endpoint rejected the credential from "
                    f"{self.credential_env} (HTTP {exc.code})"
                ) from exc
            raise TransientBackendError(f"HTTP {exc.code} from endpoint") from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransientBackendError(f"unexpected response shape: {exc}") from exc


def analyze_character(
    dossier: SpeakerDossier,
    template: PromptTemplate,
    backend,
    sleep=time.sleep,
) -> CharacterCard:
    """Render, query, and parse one speaker's analysis.

    Transient transport failures are retried up to 3 times with 1 s / 2 s /
    4 s backoff; authentication failures abort immediately.
    """
    rendered = render_prompt(dossier, template)
    last_error: TransientBackendError | None = None
    for attempt, backoff in enumerate((0.0,) + RETRY_BACKOFF_S):
        if backoff:
            sleep(backoff)
        try:
            response = backend.complete(rendered.system_text, rendered.user_text)
            break
        except AuthenticationError:
            raise
        except TransientBackendError as exc:
            last_error = exc
            logger.warning(
                "backend attempt %d for %r failed: %s",
                attempt + 1,
                dossier.speaker,
                exc,
            )
    else:
        raise BackendError(
            f"backend failed after {1 + len(RETRY_BACKOFF_S)} attempts: {last_error}"
        )
    card = parse_card(
        speaker=dossier.speaker,
        response=response,
        model_id=getattr(backend, "model_id", "unknown"),
        prompt_hash=rendered.prompt_hash,
        truncated=rendered.truncated,
    )
    if card.parse_failed:
        logger.warning("response for %r did not parse into 6 sections", dossier.speaker)
    return card


class RateLimiter:
    """Thread-safe minimum spacing between acquisitions."""

    def __init__(self, requests_per_s: float, sleep=time.sleep, clock=time.monotonic):
        self.min_interval = 1.0 / requests_per_s if requests_per_s > 0 else 0.0
        self._sleep = sleep
        self._clock = clock
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self.min_interval
        if wait > 0:
            self._sleep(wait)


def analyze_dossiers(
    dossiers: list[SpeakerDossier],
    template: PromptTemplate,
    backend,
    max_concurrent: int = 2,
    requests_per_s: float = 1.0,
    sleep=time.sleep,
) -> list[CharacterCard]:
    """Analyze several speakers against a shared rate-limited backend."""
    if not dossiers:
        return []
    limiter = RateLimiter(requests_per_s, sleep=sleep)

    def job(dossier: SpeakerDossier) -> CharacterCard:
        limiter.acquire()
        return analyze_character(dossier, template, backend, sleep=sleep)

    with ThreadPoolExecutor(max_workers=max(1, max_concurrent)) as pool:
        return list(pool.map(job, dossiers))


@dataclass(frozen=True)
class ProbeReport:
    """Did the model recognize the film?  Purely descriptive."""

    matches: dict[str, dict]
    recognition_rate: float | None


def recognition_probe(cards: list[CharacterCard], true_title: str) -> ProbeReport:
    """Compare each card's film guess against the true title."""
    matches: dict[str, dict] = {}
    hits = 0
    for card in cards:
        guess = card.film_guess.strip()
        exact = guess == true_title
        substring = bool(true_title) and true_title.casefold() in guess.casefold()
        matches[card.speaker] = {
            "film_guess": guess,
            "exact": exact,
            "substring": substring,
        }
        hits += substring
    rate = hits / len(cards) if cards else None
    return ProbeReport(matches=matches, recognition_rate=rate)
