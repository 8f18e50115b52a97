import itertools

import pytest

from tot.backends import MockSource, build_scenario_model, scenario_manifest
from tot.backends.mock import MockRecord, MockScenario
from tot.decision import (
    HIGH,
    LOW,
    DecisionOutcome,
    PredictionBundle,
    decide,
    decide_bundle,
    decide_records,
    outcome_from_dict,
    outcome_to_dict,
    stage1_confidence,
    stage2_final,
)
from tot.domain import Prediction, ToTConfig
from tot.errors import MissingFeature

from conftest import make_taxonomy


def P(*ids):
    return tuple(Prediction(class_id=c) for c in ids)


class TestStage1:
    def test_agreement_high(self):
        assert stage1_confidence(Prediction(3), P(3, 7)) == HIGH

    def test_disagreement_low(self):
        assert stage1_confidence(Prediction(3), P(5)) == LOW

    def test_empty_seconds_low(self):
        assert stage1_confidence(Prediction(3), ()) == LOW


class TestStage2:
    def test_top1_consistent_with_orig(self):
        final, rank = stage2_final(Prediction(3), P(5), P(), (3, 9))
        assert final == 3 and rank == 0

    def test_top2_consistent_with_noblur(self):
        final, rank = stage2_final(Prediction(3), P(), P(5), (9, 5))
        assert final == 5 and rank == 1

    def test_nothing_consistent_null(self):
        final, rank = stage2_final(Prediction(3), P(5), P(), (9, 8))
        assert final is None and rank is None


def rule_oracle(orig, blur, noblur, third):
    """Direct enumeration of the two-stage rule."""
    if orig in blur:
        return "high", orig
    consistent = {orig} | set(blur) | set(noblur)
    for candidate in third:
        if candidate in consistent:
            return "low", candidate
    return "low", None


class TestTruthTable:
    def test_exhaustive_membership_combinations(self):
        """Every candidate independently in R via orig/blur/noblur or absent."""
        cases = 0
        for top_n in (1, 2, 3):
            for orig_in_seconds in (False, True):
                # each third candidate is either absent from R or enters R
                # through one of the three families
                for memberships in itertools.product(
                    ("none", "orig", "blur", "noblur"), repeat=top_n
                ):
                    orig = 0
                    blur = [10] if not orig_in_seconds else [0, 10]
                    noblur = [20]
                    third = []
                    fresh = iter(range(30, 90))
                    for kind in memberships:
                        if kind == "none":
                            third.append(next(fresh))
                        elif kind == "orig":
                            third.append(orig)
                        elif kind == "blur":
                            member = next(fresh)
                            blur.append(member)
                            third.append(member)
                        else:
                            member = next(fresh)
                            noblur.append(member)
                            third.append(member)
                    bundle = PredictionBundle(
                        p_orig=Prediction(orig),
                        seconds_blur=P(*blur),
                        seconds_noblur=P(*noblur),
                        p_third=tuple(third),
                    )
                    outcome = decide_bundle("case", bundle)
                    conf, final = rule_oracle(orig, blur, noblur, third)
                    assert outcome.confidence == conf
                    assert outcome.final == final
                    cases += 1
        assert cases >= 48

    def test_randomized_against_oracle(self, rng):
        for _ in range(500):
            orig = int(rng.integers(0, 6))
            blur = [int(c) for c in rng.integers(0, 6, size=rng.integers(0, 4))]
            noblur = [int(c) for c in rng.integers(0, 6, size=rng.integers(0, 4))]
            third = [int(c) for c in rng.integers(0, 6, size=rng.integers(0, 4))]
            bundle = PredictionBundle(
                p_orig=Prediction(orig),
                seconds_blur=P(*blur),
                seconds_noblur=P(*noblur),
                p_third=tuple(third),
            )
            outcome = decide_bundle("case", bundle)
            conf, final = rule_oracle(orig, blur, noblur, third)
            assert (outcome.confidence, outcome.final) == (conf, final)

    def test_null_monotone_in_top_n(self, rng):
        """Extending the candidate list never turns an answer into Null."""
        for _ in range(200):
            orig = int(rng.integers(0, 5))
            blur = [int(c) for c in rng.integers(0, 5, size=2)]
            noblur = [int(c) for c in rng.integers(0, 5, size=1)]
            full_third = [int(c) for c in rng.integers(0, 5, size=4)]
            previous_null = None
            for top_n in (1, 2, 3, 4):
                bundle = PredictionBundle(
                    p_orig=Prediction(orig),
                    seconds_blur=P(*blur),
                    seconds_noblur=P(*noblur),
                    p_third=tuple(full_third[:top_n]),
                )
                outcome = decide_bundle("case", bundle)
                is_null = outcome.confidence == LOW and outcome.final is None
                if previous_null is not None and not previous_null:
                    assert not is_null
                previous_null = is_null

    def test_high_confidence_never_null(self):
        with pytest.raises(ValueError):
            DecisionOutcome(record_id="x", confidence=HIGH, final=None)


def _scenario_one(tax, rec):
    return MockScenario(taxonomy=tax, records=[rec])


class TestDecideWithMocks:
    def test_full_agreement_high(self):
        tax = make_taxonomy(2, 2)
        rec = MockRecord(
            id="r1", label_fine=1, orig=(1,),
            second_blur={"2.0": (1,)}, second_noblur=(1,), third=(1,),
        )
        scenario = _scenario_one(tax, rec)
        model = build_scenario_model(scenario)
        outcome = decide(
            scenario_manifest(scenario)[0], model, MockSource(scenario),
            ToTConfig(blur_sigma=2.0, top_n=2, k=model.config.k,
                      reducer_dim=model.config.reducer_dim),
        )
        assert outcome.confidence == HIGH
        assert outcome.final == 1

    def test_adversarial_corrected_by_third(self):
        # original is adversarially wrong; blur flips the second back to the
        # truth; symbols rank the truth first -> corrected final answer
        tax = make_taxonomy(2, 2)
        rec = MockRecord(
            id="r1", label_fine=2, orig=(0,),
            second_blur={"2.0": (2,)}, second_noblur=(0,), third=(2, 0),
        )
        scenario = _scenario_one(tax, rec)
        model = build_scenario_model(scenario)
        outcome = decide(
            scenario_manifest(scenario)[0], model, MockSource(scenario),
            ToTConfig(blur_sigma=2.0, top_n=2, k=model.config.k,
                      reducer_dim=model.config.reducer_dim),
        )
        assert outcome.confidence == LOW
        assert outcome.final == 2
        assert outcome.stage2_rank == 0

    def test_no_rois_and_disjoint_symbols_null(self):
        tax = make_taxonomy(2, 2)
        rec = MockRecord(
            id="r1", label_fine=0, orig=(0,),
            second_blur={"2.0": ()}, second_noblur=(), third=(2, 3),
        )
        scenario = _scenario_one(tax, rec)
        model = build_scenario_model(scenario)
        outcome = decide(
            scenario_manifest(scenario)[0], model, MockSource(scenario),
            ToTConfig(blur_sigma=2.0, top_n=2, k=model.config.k,
                      reducer_dim=model.config.reducer_dim),
        )
        assert outcome.confidence == LOW
        assert outcome.final is None

    def test_prompt_follows_wrong_orig_superclass(self):
        # the segmentation prompt derives from the (possibly wrong) original
        tax = make_taxonomy(2, 2)
        rec = MockRecord(
            id="r1", label_fine=0, orig=(3,),
            second_blur={"2.0": (3,)}, second_noblur=(3,), third=(0,),
        )
        scenario = _scenario_one(tax, rec)
        model = build_scenario_model(scenario)

        prompts = []

        class SpySource(MockSource):
            def seconds(self, record, prompt, sigma, blurred):
                prompts.append(prompt)
                return super().seconds(record, prompt, sigma, blurred)

        decide(
            scenario_manifest(scenario)[0], model, SpySource(scenario),
            ToTConfig(blur_sigma=2.0, top_n=1, k=model.config.k,
                      reducer_dim=model.config.reducer_dim),
        )
        assert prompts and all(p == tax.super_name_of(3) for p in prompts)

    def test_decide_deterministic_and_parallel_equal(self):
        tax = make_taxonomy(3, 2)
        from tot.backends import make_refusal_scenario

        scenario = make_refusal_scenario(tax, 60, disagree_rate=0.3, sigmas=(1.5,), seed=5)
        model = build_scenario_model(scenario)
        records = scenario_manifest(scenario)
        cfg_dict = model.config.to_dict()
        cfg_dict.update(blur_sigma=1.5, top_n=2)
        config = ToTConfig.from_dict(cfg_dict)
        source = MockSource(scenario)
        serial = decide_records(records, model, source, config, jobs=1)
        parallel = decide_records(records, model, source, config, jobs=8)
        assert serial == parallel

    def test_missing_feature_only_matters_for_low(self, tmp_path):
        tax = make_taxonomy(2, 2)
        rec_high = MockRecord(
            id="r1", label_fine=0, orig=(0,),
            second_blur={"2.0": (0,)}, second_noblur=(0,), third=(0,),
        )
        scenario = _scenario_one(tax, rec_high)
        model = build_scenario_model(scenario)

        class NoFeatures(MockSource):
            def features(self, record):
                raise MissingFeature("no tensor")

        config = ToTConfig(blur_sigma=2.0, top_n=1, k=model.config.k,
                           reducer_dim=model.config.reducer_dim)
        outcome = decide(scenario_manifest(scenario)[0], model, NoFeatures(scenario), config)
        assert outcome.confidence == HIGH
        assert outcome.bundle.p_third == ()

        rec_low = MockRecord(
            id="r1", label_fine=0, orig=(0,),
            second_blur={"2.0": (1,)}, second_noblur=(0,), third=(0,),
        )
        scenario2 = _scenario_one(tax, rec_low)
        with pytest.raises(MissingFeature):
            decide(scenario_manifest(scenario2)[0], model, NoFeatures(scenario2), config)


class TestOutcomeSerialization:
    def test_round_trip(self):
        bundle = PredictionBundle(
            p_orig=Prediction(3), seconds_blur=P(1, 3), seconds_noblur=P(2),
            p_third=(3, 1),
        )
        outcome = decide_bundle("rec9", bundle)
        config = ToTConfig(blur_sigma=1.5, top_n=2)
        d = outcome_to_dict(outcome, config)
        assert d["id"] == "rec9"
        assert d["sigma"] == 1.5 and d["top_n"] == 2
        assert d["seconds_blur"] == [1, 3]
        back = outcome_from_dict(d)
        assert back.confidence == outcome.confidence
        assert back.final == outcome.final
        assert back.bundle.p_third == outcome.bundle.p_third

    def test_null_final_serializes_as_none(self):
        bundle = PredictionBundle(
            p_orig=Prediction(0), seconds_blur=P(1), seconds_noblur=P(),
            p_third=(5,),
        )
        outcome = decide_bundle("r", bundle)
        d = outcome_to_dict(outcome, ToTConfig())
        assert d["final"] is None
        assert outcome_from_dict(d).final is None
