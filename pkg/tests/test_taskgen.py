import json

import pytest

from app.errors import InvalidDifficulty, ParseError, SchemaMismatch
from app.models.config import DataConfig
from app.models.problem import Problem, TaskFamily
from app.taskgen.corpus import build_splits, corpus_io, read_corpus, write_corpus
from app.taskgen.generators import gen_problems, split_by_hash
from app.taskgen.solver import (countdown_expression, countdown_solutions, gold_solve, is_correct,
                                latin_completions, parse_chain, parse_countdown, parse_grid, replay_trace,
                                solution_text, verify_countdown_steps)


class TestSolvers:
    """Tests for the gold oracles of each family."""

    def test_chain_trace(self, chain_problem):
        draft = Problem(id="c", family=TaskFamily.CHAIN_ARITHMETIC, difficulty=2,
                        text="start 3 ; add 4 ; mul 2 ; mod 10 ?", gold_answer=0)
        trace, answer = gold_solve(draft)
        assert trace == [("add", 4, 7), ("mul", 2, 4)]
        assert answer == 4
        assert replay_trace(chain_problem) == 4

    def test_parse_chain(self):
        assert parse_chain("start 3 ; add 4 ; mul 2 ; mod 10 ?") == (3, [("add", 4), ("mul", 2)], 10)

    def test_countdown_expression(self):
        solutions = countdown_solutions([2, 3, 5], 25)
        assert solutions
        assert countdown_expression(solutions[0]) == "( 2 + 3 ) * 5"

    def test_countdown_gold_and_verification(self):
        problem = Problem(id="cd", family=TaskFamily.COUNTDOWN_STYLE, difficulty=2,
                          text="numbers 2 , 3 , 5 ; target 25 ?", gold_answer=0)
        trace, answer = gold_solve(problem)
        problem = Problem(id="cd", family=TaskFamily.COUNTDOWN_STYLE, difficulty=2,
                          text=problem.text, gold_answer=answer, gold_trace=tuple(trace))
        assert answer == 25
        gold = solution_text(problem)
        assert gold == "2 + 3 = 5 ; 5 * 5 = 25 ; #### 25"
        assert verify_countdown_steps(problem, gold)
        assert is_correct(problem, gold, 25)
        # right answer, but 5 is used twice and 2 never
        assert not is_correct(problem, "5 * 5 = 25 ; #### 25", 25)

    def test_latin_single_blank(self):
        text = "grid 1 , 2 , 3 , 4 / 3 , 4 , 1 , 2 / 2 , 1 , 4 , 3 / 4 , 3 , 2 , _ ?"
        grid = parse_grid(text)
        assert grid[3][3] is None
        assert latin_completions(grid) == [[[1, 2, 3, 4], [3, 4, 1, 2], [2, 1, 4, 3], [4, 3, 2, 1]]]

        problem = Problem(id="l", family=TaskFamily.LATIN_SQUARE, difficulty=1, text=text, gold_answer=0)
        trace, answer = gold_solve(problem)
        assert trace == [("fill", 15, 1)]
        assert answer == 1

    def test_chain_solution_text(self, chain_problem):
        assert solution_text(chain_problem) == "step 1 : 7 ; step 2 : 4 ; #### 4"


class TestGenerators:
    """Tests for problem generation."""

    @pytest.mark.parametrize("family,difficulty", [
        (TaskFamily.CHAIN_ARITHMETIC, 4),
        (TaskFamily.COUNTDOWN_STYLE, 2),
        (TaskFamily.LATIN_SQUARE, 3),
    ])
    def test_gold_answers_replay(self, family, difficulty):
        problems = gen_problems(family, difficulty, 8, seed=5)
        assert len({p.text for p in problems}) == 8
        for problem in problems:
            assert replay_trace(problem) == problem.gold_answer
            assert gold_solve(problem)[1] == problem.gold_answer

    def test_every_countdown_target_is_reachable(self):
        problems = gen_problems(TaskFamily.COUNTDOWN_STYLE, None, 256, seed=17)
        assert len({p.text for p in problems}) == 256
        for problem in problems:
            numbers, target = parse_countdown(problem.text)
            assert countdown_solutions(numbers, target)
            assert replay_trace(problem) == problem.gold_answer == target

    def test_deterministic(self):
        first = gen_problems(TaskFamily.CHAIN_ARITHMETIC, 5, 10, seed=42)
        second = gen_problems(TaskFamily.CHAIN_ARITHMETIC, 5, 10, seed=42)
        assert first == second
        assert first != gen_problems(TaskFamily.CHAIN_ARITHMETIC, 5, 10, seed=43)

    def test_ids_encode_parameters(self):
        problems = gen_problems(TaskFamily.CHAIN_ARITHMETIC, 2, 3, seed=1)
        assert [p.id for p in problems] == [f"chain-k2-n3-s1-{i:05d}" for i in range(3)]

    def test_chain_difficulty_is_operation_count(self):
        for problem in gen_problems(TaskFamily.CHAIN_ARITHMETIC, 6, 5, seed=2):
            assert len(problem.gold_trace) == 6

    @pytest.mark.parametrize("family,difficulty", [
        (TaskFamily.CHAIN_ARITHMETIC, 1),
        (TaskFamily.CHAIN_ARITHMETIC, 9),
        (TaskFamily.COUNTDOWN_STYLE, 4),
        (TaskFamily.LATIN_SQUARE, 0),
    ])
    def test_invalid_difficulty(self, family, difficulty):
        with pytest.raises(InvalidDifficulty):
            gen_problems(family, difficulty, 3, seed=0)

    def test_split_by_hash_is_stable(self):
        problems = gen_problems(TaskFamily.CHAIN_ARITHMETIC, 3, 50, seed=9)
        train, test = split_by_hash(problems, 0.2)
        assert len(train) + len(test) == 50
        assert split_by_hash(list(reversed(problems)), 0.2)[1] == list(reversed(test))


class TestCorpus:
    """Tests for corpus files and split construction."""

    def test_round_trip(self, tmp_path):
        problems = gen_problems(TaskFamily.LATIN_SQUARE, 2, 4, seed=3)
        path = tmp_path / "corpus.jsonl"
        corpus_io(problems, path)
        assert corpus_io(path) == problems

    def test_parse_error_reports_line(self, tmp_path, chain_problems):
        path = tmp_path / "corpus.jsonl"
        write_corpus(chain_problems, path)
        lines = path.read_text().splitlines()
        lines[6:6] = ["{not json"]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as excinfo:
            read_corpus(path)
        assert excinfo.value.line == 7

    def test_schema_mismatch(self, tmp_path, chain_problem):
        path = tmp_path / "corpus.jsonl"
        record = chain_problem.to_dict()
        record["schema"] = 99
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(SchemaMismatch):
            read_corpus(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_corpus(path) == []

    def test_build_splits_are_disjoint(self):
        data = DataConfig(train_families=["chain"], test_families=["chain", "countdown"],
                          train_problems=60, train_difficulties=[2, 3], test_problems=6,
                          test_difficulties=[3, 4], test_fraction=0.3)
        train, test = build_splits(data, seed=4)
        assert train and test
        assert not {p.text for p in train} & {p.text for p in test}
        assert not {p.id for p in train} & {p.id for p in test}
        families = [p.family for p in test]
        assert families.count(TaskFamily.CHAIN_ARITHMETIC) <= 6
        assert families.count(TaskFamily.COUNTDOWN_STYLE) <= 6
        assert {p.difficulty for p in test if p.family == TaskFamily.CHAIN_ARITHMETIC} <= {3, 4}
