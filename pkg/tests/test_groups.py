import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgsampling.errors import (
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    IndexVersionError,
    LexiconHashMismatchError,
)
from kgsampling.groups import (
    NO_FINDING,
    Instance,
    PartitionError,
    PartitionPolicy,
    build_group_index,
    build_support_set,
    expected_support_size,
    group_id_of,
    index_to_json,
    load_index,
    partition_frequent_rare,
    read_corpus,
    restrict_index,
    save_index,
    write_corpus,
)
from kgsampling.lexicon import parse_lexicon
from kgsampling.synth import SynthConfig, generate_corpus

# Published top-20 group counts from a clinical mammography test set.
PUBLISHED_TOP20 = [
    (["scattered fibroglandular densities"], 264),
    (["heterogeneously dense"], 160),
    (["fatty"], 66),
    (["scattered fibroglandular densities", "benign calcification"], 48),
    (["benign calcification", "heterogeneously dense"], 43),
    (["scattered fibroglandular densities", "lumpectomy"], 36),
    (["biopsy clip", "scattered fibroglandular densities"], 34),
    (["scattered fibroglandular densities", "implant"], 25),
    (["implant", "heterogeneously dense"], 24),
    (["biopsy clip", "heterogeneously dense"], 23),
    (["fatty", "benign calcification"], 20),
    (["lumpectomy", "heterogeneously dense"], 17),
    (["scattered fibroglandular densities", "asymmetry"], 11),
    (["biopsy clip", "scattered fibroglandular densities", "benign calcification"], 10),
    (["scattered fibroglandular densities", "focal asymmetry"], 10),
    (["extremely dense"], 10),
    (["focal asymmetry", "heterogeneously dense"], 9),
    (["mass", "heterogeneously dense"], 9),
    (["benign calcification vascular", "scattered fibroglandular densities"], 8),
    (["reduction", "scattered fibroglandular densities"], 8),
]


def make(iid, report, dim=3, split="train"):
    return Instance(iid, report, np.ones(dim), split=split)


def test_set_equality_grouping(lexicon):
    corpus = [
        make("a", "mass. fatty."),
        make("b", "the breasts are fatty. there is a mass."),
        make("c", "implant in place."),
        make("d", "no mass."),
    ]
    index = build_group_index(corpus, lexicon, PartitionPolicy.top_n(1))
    assert index.M == 3
    assert index.frequencies == {"fatty+mass": 2, "implant": 1, NO_FINDING: 1}
    assert index.groups["fatty+mass"] == ["a", "b"]


def test_published_group_table_counts(lexicon):
    corpus = []
    expected = {}
    for phrases, count in PUBLISHED_TOP20:
        report = ". ".join(f"there is {p}" for p in phrases)
        gid = group_id_of(p.replace(" ", "_") for p in phrases)
        expected[gid] = count
        corpus += [make(f"{gid}-{i}", report) for i in range(count)]
    index = build_group_index(corpus, lexicon, PartitionPolicy.top_n(10))
    assert index.frequencies == expected
    assert index.frequencies["scattered_fibroglandular_densities"] == 264
    assert index.ranked_groups()[0] == "scattered_fibroglandular_densities"


def test_zipf_corpus_bookkeeping(lexicon):
    corpus = generate_corpus(SynthConfig(n_instances=1000, n_groups=30, seed=3), lexicon)
    index = build_group_index(corpus, lexicon, PartitionPolicy.min_count(5))
    assert sum(index.frequencies.values()) == 1000
    index.check()


def test_dimension_mismatch_names_instance(lexicon):
    corpus = [make("ok", "mass"), make("bad-one", "mass", dim=4)]
    with pytest.raises(DimensionMismatchError, match="bad-one"):
        build_group_index(corpus, lexicon, PartitionPolicy.top_n(1))


def test_duplicate_ids(lexicon):
    with pytest.raises(DuplicateIdError, match="x"):
        build_group_index([make("x", "mass"), make("x", "fatty")], lexicon, PartitionPolicy.top_n(1))


@given(st.lists(st.sampled_from(["mass", "fatty", "implant", "asymmetry", "lumpectomy"]), unique=True),
       st.randoms())
def test_group_id_permutation_invariant(concepts, rnd):
    shuffled = list(concepts)
    rnd.shuffle(shuffled)
    assert group_id_of(shuffled) == group_id_of(sorted(concepts))


def test_group_id_empty():
    assert group_id_of([]) == NO_FINDING


@pytest.mark.parametrize(
    "counts, policy, frequent",
    [
        ({"g1": 10, "g2": 5, "g3": 1}, PartitionPolicy.top_n(2), {"g1", "g2"}),
        ({"g1": 10, "g2": 5, "g3": 4, "g4": 1}, PartitionPolicy.min_count(5), {"g1", "g2"}),
        ({"g1": 3, "g2": 3}, PartitionPolicy.top_n(1), {"g1"}),
        ({"b": 3, "a": 3, "c": 1}, PartitionPolicy.top_n(1), {"a"}),
    ],
)
def test_partition(counts, policy, frequent):
    f, r = partition_frequent_rare(counts, policy)
    assert f == frequent
    assert r == set(counts) - frequent


def test_top_n_needs_a_rare_group():
    with pytest.raises(PartitionError):
        partition_frequent_rare({"g1": 3, "g2": 1}, PartitionPolicy.top_n(2))


@pytest.mark.parametrize("mode, value", [("top_n", 0), ("min_count", -1), ("median", 3)])
def test_policy_validation(mode, value):
    with pytest.raises(ValueError):
        PartitionPolicy(mode, value)


def _index_with_sizes(lexicon, sizes):
    phrases = ["mass", "fatty", "implant", "lumpectomy", "asymmetry"]
    corpus = []
    for phrase, size in zip(phrases, sizes):
        corpus += [make(f"{phrase}{i:03d}", phrase) for i in range(size)]
    return build_group_index(corpus, lexicon, PartitionPolicy.min_count(1))


def test_support_keeps_small_groups(lexicon):
    index = _index_with_sizes(lexicon, [8, 4])
    support = build_support_set(index, K=10, seed=0)
    assert len(support) == 12
    assert sorted(support) == sorted(index.group_map)


def test_support_caps_at_k(lexicon):
    index = _index_with_sizes(lexicon, [12])
    support = build_support_set(index, K=10, seed=0)
    assert len(support) == len(set(support)) == 10


def test_support_counting_oracle(reference_index):
    support = build_support_set(reference_index, K=10, seed=1)
    expected = sum(min(10, len(m)) for m in reference_index.groups.values())
    assert len(support) == expected == expected_support_size(reference_index.frequencies, 10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 25), min_size=1, max_size=5), st.integers(1, 12), st.integers(0, 2**31))
def test_support_cardinality_per_group(sizes, K, seed):
    from kgsampling.lexicon import default_lexicon

    index = _index_with_sizes(default_lexicon(), sizes)
    support = build_support_set(index, K, seed)
    assert len(set(support)) == len(support)
    per_group = {}
    for iid in support:
        per_group[index.group_of(iid)] = per_group.get(index.group_of(iid), 0) + 1
    for gid, members in index.groups.items():
        assert per_group[gid] == min(K, len(members))
    assert build_support_set(index, K, seed) == support


def test_support_subcorpus_rebuild(reference_train, reference_index, lexicon):
    support = set(build_support_set(reference_index, K=10, seed=0))
    sub = [inst for inst in reference_train if inst.instance_id in support]
    rebuilt = build_group_index(sub, lexicon, PartitionPolicy.min_count(5))
    assert max(rebuilt.frequencies.values()) <= 10
    assert rebuilt == restrict_index(reference_index, support, PartitionPolicy.min_count(5))


def test_save_load_roundtrip(tmp_path, reference_index, lexicon):
    path = tmp_path / "index.json"
    save_index(reference_index, path)
    loaded = load_index(path, lexicon)
    assert loaded == reference_index
    assert loaded.group_map == reference_index.group_map


def test_tampered_version(tmp_path, reference_index):
    data = reference_index.to_dict()
    data["format_version"] = 99
    path = tmp_path / "index.json"
    path.write_text(json.dumps(data))
    with pytest.raises(IndexVersionError):
        load_index(path)


def test_lexicon_hash_mismatch(tmp_path, reference_index):
    path = tmp_path / "index.json"
    save_index(reference_index, path)
    edited = parse_lexicon("[concepts]\nmass | mass | mass\n[negation]\nno\n")
    assert edited.version_hash != reference_index.lexicon_hash
    with pytest.raises(LexiconHashMismatchError):
        load_index(path, edited)
    assert load_index(path, edited, allow_stale=True) == reference_index


def test_persisted_index_is_byte_identical(reference_corpus, lexicon):
    def build():
        train = [i for i in reference_corpus if i.split == "train"]
        return index_to_json(build_group_index(train, lexicon, PartitionPolicy.top_n(20)))

    assert build() == build()


def test_corpus_file_roundtrip(tmp_path, reference_corpus):
    path = tmp_path / "c.jsonl"
    write_corpus(reference_corpus[:50], path)
    loaded, dim = read_corpus(path)
    assert dim == len(reference_corpus[0].image_features)
    assert loaded == reference_corpus[:50]


def test_corpus_header_only(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"schema": 1, "dim": 4}\n')
    assert read_corpus(path) == ([], 4)


def test_corpus_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"schema": 1, "dim": 2}\n'
                    '{"id": "a", "report": "mass", "features": [1, 2], "split": "train"}\n'
                    '{"id": "b", "report": \n')
    with pytest.raises(DataError, match=":3:"):
        read_corpus(path)


def test_corpus_declared_dim_enforced(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"schema": 1, "dim": 3}\n'
                    '{"id": "a", "report": "mass", "features": [1, 2], "split": "train"}\n')
    with pytest.raises(DimensionMismatchError, match="'a'"):
        read_corpus(path)
