"""Batch dispatch of rendered prompts to a chat-completion HTTP endpoint.

Each request is a single self-contained user message (no system message).
Transient failures (HTTP 429/5xx, timeouts) are retried with bounded
exponential backoff; other 4xx responses fail terminally. Batches are
resumable: records append to a JSON Lines file keyed by prompt
fingerprint, and rerunning a batch dispatches only fingerprints absent
from that file.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .dataio import judge_record_to_dict
from .errors import ConfigError, EndpointError
from .prompts import RenderedPrompt
from .types import JudgeRecord, TokenUsage

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach the judge endpoint.

    ``auth_env`` names an environment variable holding the bearer token;
    the token value itself never appears in config files. ``think_fields``
    lists response-message fields that may carry reasoning content on
    endpoints that separate it from the main completion.
    """

    base_url: str
    model: str
    auth_env: str | None = None
    timeout: float = 120.0
    max_retries: int = 3
    parallelism: int = 4
    supports_top_k: bool = True
    think_fields: tuple[str, ...] = ("reasoning_content", "reasoning")
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise ConfigError(f"auth environment variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    @property
    def completions_url(self) -> str:
        base = self.base_url.rstrip("/")
        if base.endswith("/chat/completions"):
            return base
        return base + "/chat/completions"


@dataclass(frozen=True)
class DecodeParams:
    """Sampling parameters sent with every request."""

    temperature: float = 0.6
    top_p: float = 0.95
    top_k: int = 20
    max_tokens: int = 4096

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.top_k < 0:
            raise ConfigError("top_k must be >= 0")


def backoff_schedule(ep: EndpointConfig) -> list[float]:
    """Delays before each retry: base * 2^attempt, clipped at the cap."""
    return [min(ep.backoff_base * (2 ** attempt), ep.backoff_cap) for attempt in range(ep.max_retries)]


def _request_body(prompt: RenderedPrompt, ep: EndpointConfig, dp: DecodeParams) -> dict:
    body = {
        "model": ep.model,
        "messages": [{"role": "user", "content": prompt.text}],
        "temperature": dp.temperature,
        "top_p": dp.top_p,
        "max_tokens": dp.max_tokens,
    }
    if ep.supports_top_k:
        body["top_k"] = dp.top_k
    return body


def _extract_record(prompt: RenderedPrompt, payload: dict, ep: EndpointConfig, retries: int) -> JudgeRecord:
    try:
        choice = payload["choices"][0]
        message = choice["message"]
        content = message.get("content") or ""
    except (KeyError, IndexError, TypeError) as exc:
        raise EndpointError(f"malformed completion payload: {exc}") from exc

    # Reasoning-capable endpoints differ in where think content arrives;
    # check the configured fields and fold them into the think-tag shape.
    for think_field in ep.think_fields:
        reasoning = message.get(think_field)
        if reasoning:
            content = f"<think>\n{reasoning}\n</think>\n\n{content}"
            break

    usage = None
    if isinstance(payload.get("usage"), dict):
        u = payload["usage"]
        usage = TokenUsage(
            prompt_tokens=int(u.get("prompt_tokens", 0)),
            completion_tokens=int(u.get("completion_tokens", 0)),
        )
    truncated = choice.get("finish_reason") == "length"
    return JudgeRecord.from_completion(
        key=prompt.key,
        raw_completion=content,
        fingerprint=prompt.fingerprint,
        usage=usage,
        response_truncated=truncated,
        retries=retries,
    )


def request_judgment(
    prompt: RenderedPrompt,
    ep: EndpointConfig,
    dp: DecodeParams,
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeRecord:
    """Send one prompt; returns the JudgeRecord or raises EndpointError.

    Responses truncated by the token limit are flagged, not failed.
    """
    owns_session = session is None
    sess = session or requests.Session()
    attempts: list[str] = []
    delays = backoff_schedule(ep)
    try:
        for attempt in range(ep.max_retries + 1):
            try:
                resp = sess.post(
                    ep.completions_url,
                    json=_request_body(prompt, ep, dp),
                    headers=ep.headers(),
                    timeout=ep.timeout,
                )
            except requests.RequestException as exc:
                attempts.append(f"attempt {attempt + 1}: {type(exc).__name__}: {exc}")
                if attempt < ep.max_retries:
                    sleep(delays[attempt])
                    continue
                raise EndpointError(
                    f"request failed after {attempt + 1} attempts: {exc}", attempts
                ) from exc

            if resp.status_code == 200:
                try:
                    payload = resp.json()
                except ValueError as exc:
                    raise EndpointError(f"non-JSON response body: {exc}", attempts) from exc
                return _extract_record(prompt, payload, ep, retries=attempt)

            excerpt = resp.text[:200]
            attempts.append(f"attempt {attempt + 1}: HTTP {resp.status_code}: {excerpt}")
            if resp.status_code in RETRYABLE_STATUS and attempt < ep.max_retries:
                sleep(delays[attempt])
                continue
            if resp.status_code in RETRYABLE_STATUS:
                raise EndpointError(
                    f"HTTP {resp.status_code} persisted beyond {ep.max_retries} retries: {excerpt}",
                    attempts,
                )
            raise EndpointError(f"HTTP {resp.status_code}: {excerpt}", attempts)
    finally:
        if owns_session:
            sess.close()
    raise EndpointError("unreachable", attempts)  # pragma: no cover


def load_resume_fingerprints(resume_path) -> set[str]:
    """Fingerprints already present in a resume file (failures included)."""
    done: set[str] = set()
    path = Path(resume_path)
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail from a crashed run; the record is re-dispatched
            fp = obj.get("fingerprint")
            if fp:
                done.add(fp)
    return done


def run_batch(
    prompts: Sequence[RenderedPrompt],
    ep: EndpointConfig,
    dp: DecodeParams,
    resume_path,
    retry_failures: bool = False,
    sleep: Callable[[float], None] = time.sleep,
) -> list[JudgeRecord]:
    """Dispatch all prompts not already covered by the resume file.

    At most ``ep.parallelism`` requests are in flight; a single writer
    appends each record to the resume file as it completes, so the final
    file is always a superset of the initial one. Terminal request
    failures become failure records and the batch keeps going. Returns the
    records produced by this call (not the previously resumed ones).
    """
    if not ep.supports_top_k:
        logger.warning("endpoint schema rejects top_k; parameter will not be sent")
    done = load_resume_fingerprints(resume_path)
    if retry_failures:
        done -= _failed_fingerprints(resume_path)
    seen: set[str] = set()
    todo: list[RenderedPrompt] = []
    for prompt in prompts:
        if prompt.fingerprint in done or prompt.fingerprint in seen:
            continue
        seen.add(prompt.fingerprint)
        todo.append(prompt)
    if not todo:
        return []

    write_lock = threading.Lock()
    results: list[JudgeRecord] = []
    session = requests.Session()

    def work(prompt: RenderedPrompt) -> JudgeRecord:
        try:
            return request_judgment(prompt, ep, dp, session=session, sleep=sleep)
        except EndpointError as exc:
            return JudgeRecord(
                key=prompt.key,
                fingerprint=prompt.fingerprint,
                error=str(exc),
                retries=len(exc.attempts),
            )

    try:
        with open(resume_path, "a", encoding="utf-8") as out:
            with ThreadPoolExecutor(max_workers=ep.parallelism) as pool:
                futures = [pool.submit(work, p) for p in todo]
                for future in as_completed(futures):
                    record = future.result()
                    with write_lock:
                        out.write(
                            json.dumps(judge_record_to_dict(record), ensure_ascii=False, sort_keys=True)
                            + "\n"
                        )
                        out.flush()
                        results.append(record)
    finally:
        session.close()
    return results


def _failed_fingerprints(resume_path) -> set[str]:
    failed: set[str] = set()
    path = Path(resume_path)
    if not path.exists():
        return failed
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                continue
            if obj.get("error") is not None and obj.get("fingerprint"):
                failed.add(obj["fingerprint"])
    return failed


def sorted_records(records: Sequence[JudgeRecord]) -> list[JudgeRecord]:
    """Deterministic ordering by segment key then run index."""
    return sorted(records, key=lambda r: (r.key, r.run_index, r.fingerprint))
