import numpy as np
import pytest

from app.errors import OverLength, ShapeMismatch, UnknownToken
from app.models.layout import LayoutSequence, MaskState, Region
from app.models.plan import PlanFormat, PlanRecord
from app.seqcore.layout import (SYSTEM_PROMPT, TEMPLATE_PLAN_REQUEST, TEMPLATE_SOLVE, apply_mask,
                                assemble_layout, forward_mask)
from app.seqcore.vocab import ANSWER_MARK, codec, number_literals, text_numbers


@pytest.fixture
def plan():
    return PlanRecord(problem_id="chain-example", planner_id="oracle-frontier",
                      format=PlanFormat.HYBRID, budget=100, text="apply add 4 then mul 2 .",
                      token_count=7)


class TestCodec:
    """Tests for the text <-> id codec."""

    def test_round_trip(self, vocab):
        text = "start 12 ; add 3 ; mod 20 ?"
        assert codec(codec(text, vocab), vocab) == text

    def test_multi_digit_literals_split_into_digits(self, vocab):
        ids = vocab.encode("12")
        assert ids == [vocab.id("1"), vocab.id("2")]
        assert vocab.decode(ids) == "12"

    def test_answer_mark_followed_by_number(self, vocab):
        assert vocab.encode("####  7") == [vocab.answer_mark_id, vocab.id("7")]

    def test_unknown_unit_raises(self, vocab):
        with pytest.raises(UnknownToken) as excinfo:
            vocab.encode("start banana")
        assert excinfo.value.unit == "banana"

    def test_decode_skips_special_tokens(self, vocab):
        ids = [vocab.bos_id, vocab.id("3"), vocab.mask_id, vocab.pad_id]
        assert vocab.decode(ids, skip_special=True) == "3"

    def test_vocabulary_has_special_tokens_first(self, vocab):
        assert vocab.tokens[:3] == ("<pad>", "<mask>", "<bos>")
        assert ANSWER_MARK in vocab.index

    def test_number_literals(self, vocab):
        ids = vocab.encode("step 1 : 14 ; #### 205")
        assert number_literals(ids, vocab) == [1, 14, 205]

    def test_text_numbers(self):
        assert text_numbers("step 2 : 25 ; #### 25") == [2, 25, 25]
        assert text_numbers("no numbers here") == []


class TestAssembleLayout:
    """Tests for template assembly."""

    def test_bare_layout(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=8)

        lengths = layout.region_lengths()
        assert lengths[Region.SYSTEM] == 1 + len(SYSTEM_PROMPT.split())
        assert lengths[Region.PROBLEM] == len(vocab.encode(chain_problem.text))
        assert lengths[Region.PLAN_HEADER] == 0
        assert lengths[Region.PLAN] == 0
        assert lengths[Region.SOLUTION_MARKER] == 1
        assert lengths[Region.COMPLETION] == 8
        assert sum(lengths.values()) == len(layout)

        assert layout.ids[0] == vocab.bos_id
        assert all(layout.ids[i] == vocab.mask_id for i in layout.completion_positions)
        assert layout.completion_positions == list(range(len(layout) - 8, len(layout)))
        assert all(f == (r != Region.COMPLETION) for f, r in zip(layout.frozen, layout.regions))

    def test_plan_region_holds_plan_tokens(self, chain_problem, plan, vocab):
        layout = assemble_layout(chain_problem, plan, TEMPLATE_SOLVE, vocab, gen_len=8)

        plan_ids = [layout.ids[i] for i in layout.positions(Region.PLAN)]
        assert plan_ids == vocab.encode(plan.text)
        header = layout.positions(Region.PLAN_HEADER)
        assert [layout.ids[i] for i in header] == [vocab.plan_header_id]
        assert header[0] + 1 == layout.positions(Region.PLAN)[0]

    def test_empty_plan_gives_bare_layout(self, chain_problem, plan, vocab):
        empty = plan.with_text("", 0)
        bare = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=8)
        assert assemble_layout(chain_problem, empty, TEMPLATE_SOLVE, vocab, gen_len=8) == bare

    def test_plan_request_template_ends_at_header(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_PLAN_REQUEST, vocab, gen_len=5)
        assert layout.ids[layout.completion_start - 1] == vocab.plan_header_id
        assert layout.region_lengths()[Region.SOLUTION_MARKER] == 0

    def test_over_length(self, chain_problem, vocab):
        with pytest.raises(OverLength):
            assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=600, max_len=512)

    def test_invalid_arguments(self, chain_problem, vocab):
        with pytest.raises(ValueError):
            assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=0)
        with pytest.raises(ValueError):
            assemble_layout(chain_problem, None, "freeform", vocab, gen_len=4)

    def test_layout_rejects_frozen_completion(self):
        with pytest.raises(ShapeMismatch):
            LayoutSequence(ids=(1, 2), regions=(Region.SYSTEM, Region.COMPLETION), frozen=(True, True))

    def test_layout_dict_round_trip(self, chain_problem, plan, vocab):
        layout = assemble_layout(chain_problem, plan, TEMPLATE_SOLVE, vocab, gen_len=4)
        assert LayoutSequence.from_dict(layout.to_dict()) == layout


class TestForwardMask:
    """Tests for the forward masking process."""

    def test_t_zero_masks_nothing(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=16)
        state = forward_mask(layout, 0.0, np.random.default_rng(0))
        assert state.n_masked == 0

    def test_t_one_masks_every_completion_position(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=16)
        state = forward_mask(layout, 1.0, np.random.default_rng(0))
        assert state.masked_positions == layout.completion_positions

    def test_half_masks_about_half(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=10_000,
                                 max_len=20_000)
        state = forward_mask(layout, 0.5, np.random.default_rng(123))
        assert abs(state.n_masked / 10_000 - 0.5) < 0.03
        assert not any(state.masked[i] for i in range(layout.completion_start))

    def test_rejects_noise_outside_unit_interval(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=4)
        with pytest.raises(ValueError):
            forward_mask(layout, 1.5, np.random.default_rng(0))

    def test_apply_mask_replaces_masked_ids(self, chain_problem, vocab):
        layout = assemble_layout(chain_problem, None, TEMPLATE_SOLVE, vocab, gen_len=3)
        filled = layout.with_completion(vocab.encode("#### 4") + [vocab.pad_id])
        masked = [False] * len(filled)
        masked[filled.completion_start + 1] = True
        ids = apply_mask(filled, MaskState(masked=tuple(masked), t=0.5), vocab)
        assert ids[filled.completion_start] == vocab.answer_mark_id
        assert ids[filled.completion_start + 1] == vocab.mask_id
        assert list(ids[:filled.completion_start]) == list(filled.ids[:filled.completion_start])
