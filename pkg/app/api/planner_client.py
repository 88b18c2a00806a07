"""
Chat-completions client for external planners, with transcript record/replay.
"""

import json
import logging
import os
import re
import threading
import time
from typing import Any, Dict, List, Optional, Tuple

import requests
from dotenv import load_dotenv

from app.errors import HttpStatus, MalformedResponse, PlannerTimeout
from app.models.plan import PlanFormat, PlannerEndpointConfig, PlanRecord
from app.models.problem import Problem
from app.planner.oracle import enforce_budget
from app.planner.prompts import PROMPT_VERSION, planner_messages
from app.seqcore.vocab import ANSWER_MARK, Vocab, default_vocab
from app.utils.export import dumps_record, read_jsonl, write_jsonl

load_dotenv()
logger = logging.getLogger(__name__)

EXTERNAL_PREFIX = "external:"
UNIT_PATTERN = re.compile(r"####|\d+|[a-z]+|[^\sa-z\d]")


def external_planner_id(model: str) -> str:
    return f"{EXTERNAL_PREFIX}{model}"


def normalize_plan_text(text: str, vocab: Vocab) -> Tuple[str, int, bool]:
    """Lowercase and split free text into vocabulary units.

    Returns the normalized text, the number of out-of-vocabulary units
    dropped, and whether an answer mark had to be stripped.
    """
    kept: List[str] = []
    dropped = 0
    stripped = False
    for unit in UNIT_PATTERN.findall(text.lower()):
        if unit == ANSWER_MARK:
            stripped = True
            continue
        if vocab.encodable(unit) and unit not in ("<pad>", "<mask>", "<bos>"):
            kept.append(unit)
        else:
            dropped += 1
    return " ".join(kept), dropped, stripped


def _request_key(body: Dict[str, Any]) -> str:
    return dumps_record(body)


class PlannerClient:
    """Client for a chat-completions style planner endpoint."""

    def __init__(self, endpoint: PlannerEndpointConfig, session: Optional[requests.Session] = None,
                 backoff: float = 0.5):
        self.endpoint = endpoint
        self.base_url = endpoint.base_url.rstrip("/")
        self.api_key = os.environ.get(endpoint.api_key_env)
        self.session = session or requests.Session()
        self.backoff = backoff
        self._record_lock = threading.Lock()
        self._replay: Optional[Dict[str, Dict[str, Any]]] = None
        if endpoint.replay_path:
            self._replay = {_request_key(t["request"]): t for t in read_jsonl(endpoint.replay_path)}
            logger.info(f"Replaying {len(self._replay)} planner transcripts from {endpoint.replay_path}")
        elif not self.api_key:
            logger.warning(f"{endpoint.api_key_env} environment variable not set; "
                           "requests will be sent without credentials")

    def _body(self, messages: List[Dict[str, str]]) -> Dict[str, Any]:
        return {
            "model": self.endpoint.model,
            "messages": messages,
            "temperature": self.endpoint.temperature,
            "max_tokens": self.endpoint.max_tokens,
        }

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _replayed(self, body: Dict[str, Any]) -> requests.Response:
        transcript = self._replay.get(_request_key(body))
        if transcript is None:
            raise MalformedResponse("no recorded transcript matches this request")
        response = requests.Response()
        response.status_code = int(transcript.get("status", 200))
        response._content = json.dumps(transcript["response"]).encode()
        response.headers["Content-Type"] = "application/json"
        return response

    def _record(self, body: Dict[str, Any], response: requests.Response) -> None:
        if not self.endpoint.record_path:
            return
        with self._record_lock:
            write_jsonl([{"request": body, "status": response.status_code,
                          "response": response.json()}],
                        self.endpoint.record_path, append=True)

    def _post(self, body: Dict[str, Any]) -> requests.Response:
        """POST with retries on timeouts, connection failures and 5xx responses."""
        url = f"{self.base_url}/chat/completions"
        attempts = max(1, self.endpoint.retries + 1)
        last_error: Exception = PlannerTimeout("planner request never attempted")
        for attempt in range(1, attempts + 1):
            try:
                logger.debug(f"Planner request attempt {attempt}/{attempts} to {url}")
                response = self.session.post(url, json=body, headers=self._headers(),
                                             timeout=self.endpoint.timeout)
            except requests.Timeout as e:
                logger.warning(f"Planner request timed out (attempt {attempt}): {e}")
                last_error = PlannerTimeout(f"planner request timed out after {attempts} attempts")
            except requests.ConnectionError as e:
                logger.warning(f"Planner endpoint unreachable (attempt {attempt}): {e}")
                last_error = PlannerTimeout(f"planner endpoint unreachable: {e}")
            else:
                if response.status_code >= 500:
                    logger.warning(f"Planner endpoint returned {response.status_code} (attempt {attempt})")
                    last_error = HttpStatus(response.status_code, response.text)
                elif response.status_code >= 400:
                    logger.error(f"Planner endpoint rejected the request: {response.status_code}")
                    raise HttpStatus(response.status_code, response.text)
                else:
                    return response
            if attempt < attempts and self.backoff > 0:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        raise last_error

    def complete(self, messages: List[Dict[str, str]]) -> str:
        """Send one chat request and return the first choice's text."""
        body = self._body(messages)
        if self._replay is not None:
            response = self._replayed(body)
            if response.status_code >= 400:
                raise HttpStatus(response.status_code, response.text)
        else:
            response = self._post(body)
        try:
            data = response.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            logger.error(f"Invalid planner response: {e}")
            raise MalformedResponse("planner response has no choices[0].message.content") from e
        if not isinstance(content, str):
            raise MalformedResponse("planner response content is not text")
        if self._replay is None:
            self._record(body, response)
        return content


def external_plan(problem: Problem, format: PlanFormat, budget: int,
                  endpoint: PlannerEndpointConfig, client: Optional[PlannerClient] = None,
                  vocab: Optional[Vocab] = None) -> PlanRecord:
    """Ask an external planner for a plan and fit it to the vocabulary and budget."""
    vocab = vocab or default_vocab()
    client = client or PlannerClient(endpoint)
    fmt = PlanFormat(format)
    raw = client.complete(planner_messages(problem, fmt, budget))
    text, dropped, stripped = normalize_plan_text(raw, vocab)
    if stripped:
        logger.warning(f"Stripped answer mark from external plan for {problem.id}")
    if dropped:
        logger.info(f"Dropped {dropped} out-of-vocabulary units from plan for {problem.id}")
    ids = enforce_budget(text, budget, vocab)
    logger.debug(f"External plan for {problem.id} (prompt v{PROMPT_VERSION}): {len(ids)} tokens")
    return PlanRecord(
        problem_id=problem.id,
        planner_id=external_planner_id(endpoint.model),
        format=fmt,
        budget=budget,
        text=vocab.decode(ids),
        token_count=len(ids),
        dropped_units=dropped,
    )
