from unittest.mock import MagicMock

import numpy as np
import pytest

from app.api.planner_client import PlannerClient, external_plan, normalize_plan_text
from app.errors import HttpStatus, KeyCollisionWithDifferentText, PoolTooSmall
from app.models.config import SamplerConfig
from app.models.plan import Ablation, PlanFormat, PlannerEndpointConfig, PlanQuality, PlanRecord
from app.planner.ablation import ablate_plan, mismatch_pool
from app.planner.cache import PlanCache, cache
from app.planner.oracle import degrade_trace, oracle_plan, strip_trailing_answer
from app.planner.prompts import planner_messages
from app.planner.self_plan import self_plan
from app.planner.service import ensure_plans
from app.seqcore.vocab import ANSWER_MARK, MASK, NUMERALS, PAD


def chat_response(content, status=200):
    response = MagicMock()
    response.status_code = status
    response.text = "server says no" if status >= 400 else ""
    response.json.return_value = {"choices": [{"message": {"content": content}}]}
    return response


@pytest.fixture
def endpoint():
    return PlannerEndpointConfig(model="test-model", retries=3, timeout=1.0)


@pytest.fixture
def plan(chain_problem):
    return oracle_plan(chain_problem, PlanFormat.HYBRID, 100)


class TestOraclePlanner:
    """Tests for oracle plans and budget enforcement."""

    def test_hybrid_plan(self, plan):
        assert plan.text == "reduce mod 10 after each step . apply add 4 then mul 2 ."
        assert plan.planner_id == "oracle-frontier"
        assert plan.quality == PlanQuality.FRONTIER
        assert plan.token_count == len(plan.text.replace("10", "1 0").split())

    @pytest.mark.parametrize("fmt", list(PlanFormat))
    def test_every_format_fits_budget_without_answer_mark(self, chain_problem, fmt):
        record = oracle_plan(chain_problem, fmt, 100)
        assert 0 < record.token_count <= 100
        assert ANSWER_MARK not in record.text.split()

    def test_budget_truncates_at_token_granularity(self, chain_problem):
        record = oracle_plan(chain_problem, PlanFormat.HYBRID, 3)
        assert record.token_count == 3
        assert record.text == "reduce mod 1"

    def test_strip_trailing_answer(self, vocab):
        ids = vocab.encode("then mul 2 .")
        assert vocab.decode(strip_trailing_answer(ids, 2, vocab)) == "then mul ."
        assert strip_trailing_answer(ids, 3, vocab) == ids

    def test_wrong_quality_changes_every_operation(self, chain_problem):
        trace = degrade_trace(chain_problem, PlanQuality.WRONG, np.random.default_rng(0))
        ops = [step[0] for step in trace]
        assert ops == ["sub", "sub"]
        assert not set(ops) & set(chain_problem.operations)

    def test_degraded_quality_changes_one_operation(self, chain_problems):
        for problem in chain_problems:
            trace = degrade_trace(problem, PlanQuality.DEGRADED, np.random.default_rng(1))
            changed = [a[0] != b[0] for a, b in zip(trace, problem.gold_trace)]
            assert sum(changed) == 1

    def test_plans_do_not_depend_on_call_order(self, chain_problems):
        first = [oracle_plan(p, PlanFormat.OUTLINE, 50, PlanQuality.DEGRADED) for p in chain_problems]
        second = [oracle_plan(p, PlanFormat.OUTLINE, 50, PlanQuality.DEGRADED)
                  for p in reversed(chain_problems)]
        assert first == list(reversed(second))


class TestAblations:
    """Tests for plan ablations."""

    def test_shuffled_keeps_token_multiset(self, plan, vocab):
        shuffled = ablate_plan(plan, Ablation.SHUFFLED, np.random.default_rng(0))
        assert sorted(vocab.encode(shuffled.text)) == sorted(vocab.encode(plan.text))
        assert shuffled.ablation == Ablation.SHUFFLED
        assert shuffled.token_count == plan.token_count

    def test_random_tokens_keep_length(self, plan, vocab):
        noise = ablate_plan(plan, Ablation.RANDOM_TOKENS, np.random.default_rng(0))
        assert noise.token_count == plan.token_count
        assert not {MASK, PAD, ANSWER_MARK} & set(noise.text.split())

    def test_perturbed_numbers_change_only_digits(self, plan, vocab):
        perturbed = ablate_plan(plan, Ablation.PERTURBED_NUMBERS, np.random.default_rng(0))
        before, after = vocab.encode(plan.text), vocab.encode(perturbed.text)
        assert len(before) == len(after)
        for a, b in zip(before, after):
            if vocab.tokens[a] in NUMERALS:
                assert vocab.tokens[b] in NUMERALS and a != b
            else:
                assert a == b

    def test_wrong_strategy_swaps_operations(self, plan):
        swapped = ablate_plan(plan, Ablation.WRONG_STRATEGY, np.random.default_rng(0))
        assert swapped.text == "reduce mod 10 after each step . apply mul 4 then sub 2 ."

    def test_mismatched_over_two_problems(self, chain_problems):
        a, b = (oracle_plan(p, PlanFormat.HYBRID, 100) for p in chain_problems[:2])
        assigned = mismatch_pool([a, b], np.random.default_rng(0))
        assert assigned[a.problem_id].text == b.text
        assert assigned[b.problem_id].text == a.text
        assert assigned[a.problem_id].problem_id == a.problem_id
        assert assigned[a.problem_id].ablation == Ablation.MISMATCHED

    def test_mismatched_has_no_fixed_points(self, chain_problems):
        plans = [oracle_plan(p, PlanFormat.HYBRID, 100) for p in chain_problems]
        by_id = {p.problem_id: p for p in plans}
        for seed in range(5):
            assigned = mismatch_pool(plans, np.random.default_rng(seed))
            assert all(assigned[pid].text != by_id[pid].text for pid in by_id)
            assert sorted(r.text for r in assigned.values()) == sorted(p.text for p in plans)

    def test_mismatched_needs_two_problems(self, plan):
        with pytest.raises(PoolTooSmall):
            mismatch_pool([plan], np.random.default_rng(0))


class TestPlanCache:
    """Tests for the append-only plan cache."""

    def test_put_get_and_reload(self, tmp_path, plan):
        path = tmp_path / "plans.jsonl"
        store = PlanCache(path)
        assert cache(store, "put", plan.key, plan) == plan
        assert cache(store, "get", plan.key) == plan
        assert PlanCache(path).get(plan.key) == plan

    def test_missing_key(self, tmp_path, plan):
        assert PlanCache(tmp_path / "plans.jsonl").get(plan.key) is None

    def test_identical_put_is_a_noop(self, tmp_path, plan):
        path = tmp_path / "plans.jsonl"
        store = PlanCache(path)
        store.put(plan)
        store.put(plan)
        assert len(path.read_text().splitlines()) == 1

    def test_collision_with_different_text(self, tmp_path, plan):
        store = PlanCache(tmp_path / "plans.jsonl")
        store.put(plan)
        with pytest.raises(KeyCollisionWithDifferentText):
            store.put(plan.with_text("apply add .", 3))

    def test_over_budget_plan_is_rejected(self, tmp_path, plan):
        with pytest.raises(ValueError):
            PlanCache(tmp_path / "plans.jsonl").put(plan.with_text(plan.text, plan.budget + 1))

    def test_ensure_plans_fills_base_and_ablation(self, tmp_path, chain_problems):
        store = PlanCache(tmp_path / "plans.jsonl")
        records = ensure_plans(chain_problems, "oracle-frontier", PlanFormat.HYBRID, 50, store,
                               ablation=Ablation.SHUFFLED)
        assert [r.problem_id for r in records] == [p.id for p in chain_problems]
        assert all(r.ablation == Ablation.SHUFFLED for r in records)
        assert len(store) == 2 * len(chain_problems)
        again = ensure_plans(chain_problems, "oracle-frontier", PlanFormat.HYBRID, 50,
                             PlanCache(tmp_path / "plans.jsonl"), ablation=Ablation.SHUFFLED)
        assert again == records


class TestExternalPlanner:
    """Tests for the chat-completions planner client."""

    def test_retries_server_errors(self, endpoint):
        session = MagicMock()
        session.post.side_effect = [chat_response("", 500), chat_response("", 500),
                                    chat_response("apply add then mul .")]
        client = PlannerClient(endpoint, session=session, backoff=0)
        assert client.complete([{"role": "user", "content": "hi"}]) == "apply add then mul ."
        assert session.post.call_count == 3

    def test_gives_up_after_retries(self, endpoint):
        session = MagicMock()
        session.post.return_value = chat_response("", 503)
        client = PlannerClient(endpoint, session=session, backoff=0)
        with pytest.raises(HttpStatus) as excinfo:
            client.complete([{"role": "user", "content": "hi"}])
        assert excinfo.value.status == 503
        assert session.post.call_count == endpoint.retries + 1

    def test_client_errors_are_not_retried(self, endpoint):
        session = MagicMock()
        session.post.return_value = chat_response("", 401)
        client = PlannerClient(endpoint, session=session, backoff=0)
        with pytest.raises(HttpStatus):
            client.complete([{"role": "user", "content": "hi"}])
        assert session.post.call_count == 1

    def test_external_plan_is_normalized(self, endpoint, chain_problem):
        session = MagicMock()
        session.post.return_value = chat_response("Apply ADD then MUL. #### 4 zebra")
        client = PlannerClient(endpoint, session=session, backoff=0)
        record = external_plan(chain_problem, PlanFormat.STRATEGY, 100, endpoint, client)
        assert record.text == "apply add then mul . 4"
        assert record.planner_id == "external:test-model"
        assert record.dropped_units == 1

    def test_normalize_plan_text(self, vocab):
        text, dropped, stripped = normalize_plan_text("Step 1: add 12!", vocab)
        assert text == "step 1 : add 12"
        assert dropped == 1
        assert not stripped

    def test_record_then_replay(self, tmp_path, endpoint, chain_problem):
        endpoint.record_path = str(tmp_path / "transcripts.jsonl")
        session = MagicMock()
        session.post.return_value = chat_response("fill each blank .")
        messages = planner_messages(chain_problem, PlanFormat.STRATEGY, 50)
        assert PlannerClient(endpoint, session=session, backoff=0).complete(messages) == "fill each blank ."

        replay = PlannerEndpointConfig(model="test-model", replay_path=endpoint.record_path)
        offline = MagicMock()
        assert PlannerClient(replay, session=offline).complete(messages) == "fill each blank ."
        offline.post.assert_not_called()

    def test_prompt_carries_budget_not_answer(self, chain_problem):
        messages = planner_messages(chain_problem, PlanFormat.OUTLINE, 42)
        assert "42 words" in messages[0]["content"]
        assert messages[1]["content"] == chain_problem.text


class TestSelfPlan:
    """Tests for self-planning."""

    def test_zero_budget_skips_the_model(self, chain_problem, tiny_config):
        record = self_plan({}, tiny_config, chain_problem, PlanFormat.HYBRID, 0,
                           SamplerConfig(steps=8, gen_len=8))
        assert record.text == ""
        assert record.token_count == 0
        assert record.planner_id == "self"

    def test_plan_fits_budget(self, executor, chain_problem):
        record = self_plan(executor.params, executor.config, chain_problem, PlanFormat.HYBRID, 5,
                           SamplerConfig(steps=8, gen_len=8), executor.vocab, np.random.default_rng(0))
        assert record.token_count <= 5
        assert isinstance(record, PlanRecord)
