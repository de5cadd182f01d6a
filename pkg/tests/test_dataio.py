import json

import numpy as np
import pytest

from pathae.dataio import (
    ExpressionTable,
    LabelTable,
    PathwaySet,
    Scale,
    apply_normalizer,
    fit_normalizer,
    fpkm_to_tpm_log,
    intensity_to_ipm_log,
    intersect_genes,
    load_expression_tsv,
    load_gene_mapping,
    load_labels,
    load_survival,
    map_gene_ids,
    merge_duplicate_genes,
    parse_gmt,
    parse_msigdb_json,
    per_million,
    resolve_pathways,
)
from pathae.errors import ConfigError, DataError, ParseError
from pathae.ndcore import RngStream


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadExpression:
    def test_roundtrip_values(self, tmp_path):
        p = write(tmp_path / "e.tsv", "id\tG1\tG2\nS1\t1.5\t2.0\nS2\t0.25\t3.5\n")
        t = load_expression_tsv(p)
        assert t.sample_ids == ["S1", "S2"]
        assert t.gene_names == ["G1", "G2"]
        np.testing.assert_array_equal(t.values, [[1.5, 2.0], [0.25, 3.5]])

    def test_genes_as_rows_transposed(self, tmp_path):
        p = write(tmp_path / "e.tsv", "id\tS1\tS2\nG1\t1\t2\nG2\t3\t4\n")
        t = load_expression_tsv(p, orientation="genes_as_rows")
        assert t.sample_ids == ["S1", "S2"]
        assert t.gene_names == ["G1", "G2"]
        np.testing.assert_array_equal(t.values, [[1.0, 3.0], [2.0, 4.0]])

    def test_ragged_row_names_line(self, tmp_path):
        p = write(tmp_path / "e.tsv", "id\tG1\tG2\nS1\t1\t2\nS2\t3\n")
        with pytest.raises(ParseError, match=":3"):
            load_expression_tsv(p)

    def test_non_numeric_cell(self, tmp_path):
        p = write(tmp_path / "e.tsv", "id\tG1\nS1\tNA\n")
        with pytest.raises(ParseError, match="non-numeric"):
            load_expression_tsv(p)

    def test_empty_cell_rejected(self, tmp_path):
        p = write(tmp_path / "e.tsv", "id\tG1\tG2\nS1\t1\t\n")
        with pytest.raises(ParseError, match="empty"):
            load_expression_tsv(p)

    def test_duplicate_sample_ids(self, tmp_path):
        p = write(tmp_path / "e.tsv", "id\tG1\nS1\t1\nS1\t2\n")
        with pytest.raises(ParseError, match="duplicate sample"):
            load_expression_tsv(p)

    def test_csv_extension_switches_delimiter(self, tmp_path):
        p = write(tmp_path / "e.csv", "id,G1\nS1,4.5\n")
        t = load_expression_tsv(p)
        assert t.values[0, 0] == 4.5


class TestGeneMapping:
    def test_identity_mapping_keeps_table(self, tmp_path):
        t = ExpressionTable(["S1"], ["A", "B"], [[1.0, 2.0]])
        out = map_gene_ids(t, {"A": "A", "B": "B"})
        assert out.gene_names == ["A", "B"]
        np.testing.assert_array_equal(out.values, t.values)

    def test_unmapped_dropped(self):
        t = ExpressionTable(["S1"], ["ENSG1", "ENSG2"], [[1.0, 2.0]])
        out = map_gene_ids(t, {"ENSG1": "TP53"})
        assert out.gene_names == ["TP53"]
        assert out.values.shape == (1, 1)

    def test_colliding_names_kept_for_merge(self):
        t = ExpressionTable(["S1"], ["E1", "E2"], [[1.0, 2.0]])
        out = map_gene_ids(t, {"E1": "X", "E2": "X"})
        assert out.gene_names == ["X", "X"]

    def test_nothing_mapped_is_error(self):
        t = ExpressionTable(["S1"], ["E1"], [[1.0]])
        with pytest.raises(DataError):
            map_gene_ids(t, {"OTHER": "X"})

    def test_mapping_file(self, tmp_path):
        p = write(tmp_path / "map.tsv", "ENSG1\tTP53\nENSG2\tBRCA1\n")
        assert load_gene_mapping(p) == {"ENSG1": "TP53", "ENSG2": "BRCA1"}


class TestMergeDuplicates:
    def test_log_space_average(self):
        t = ExpressionTable(["S1"], ["X", "X"], [[1.0, 2.0]], Scale("log2", 1.0))
        out = merge_duplicate_genes(t)
        # mean of 2^1-1 and 2^2-1 is 2, back to log2(2+1)
        assert abs(out.values[0, 0] - np.log2(3.0)) < 1e-12
        assert out.gene_names == ["X"]

    def test_no_duplicates_unchanged(self):
        t = ExpressionTable(["S1"], ["A", "B"], [[1.0, 2.0]], Scale("log2", 1.0))
        out = merge_duplicate_genes(t)
        np.testing.assert_array_equal(out.values, t.values)

    def test_identical_columns_merge_to_same(self):
        t = ExpressionTable(["S1", "S2"], ["A", "A"], [[2.0, 2.0], [5.0, 5.0]], Scale("log2", 1.0))
        out = merge_duplicate_genes(t)
        np.testing.assert_allclose(out.values[:, 0], [2.0, 5.0], rtol=1e-12)

    def test_idempotent(self):
        t = ExpressionTable(["S1"], ["A", "A", "B"], [[1.0, 3.0, 0.5]], Scale("log2", 1.0))
        once = merge_duplicate_genes(t)
        twice = merge_duplicate_genes(once)
        np.testing.assert_array_equal(once.values, twice.values)

    def test_linear_scale_rejected(self):
        t = ExpressionTable(["S1"], ["A", "A"], [[1.0, 2.0]], Scale("linear"))
        with pytest.raises(DataError):
            merge_duplicate_genes(t)


class TestIntersect:
    def test_identical_sets_unchanged(self):
        a = ExpressionTable(["S1"], ["A", "B"], [[1.0, 2.0]])
        b = ExpressionTable(["T1"], ["A", "B"], [[3.0, 4.0]])
        a2, b2 = intersect_genes(a, b)
        assert a2.gene_names == b2.gene_names == ["A", "B"]

    def test_partial_overlap(self):
        a = ExpressionTable(["S1"], ["A", "B", "C"], [[1.0, 2.0, 3.0]])
        b = ExpressionTable(["T1"], ["B", "C", "D"], [[4.0, 5.0, 6.0]])
        a2, b2 = intersect_genes(a, b)
        assert a2.gene_names == ["B", "C"]
        np.testing.assert_array_equal(a2.values, [[2.0, 3.0]])
        np.testing.assert_array_equal(b2.values, [[4.0, 5.0]])

    def test_disjoint_is_error(self):
        a = ExpressionTable(["S1"], ["A"], [[1.0]])
        b = ExpressionTable(["T1"], ["B"], [[2.0]])
        with pytest.raises(DataError):
            intersect_genes(a, b)


class TestNormalizers:
    def test_zscore_population_sd(self):
        t = ExpressionTable(["a", "b", "c"], ["G"], [[1.0], [2.0], [3.0]])
        out = apply_normalizer(fit_normalizer(t, "zscore"), t)
        np.testing.assert_allclose(out.values[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_zscore_constant_column_zeroed(self):
        t = ExpressionTable(["a", "b"], ["G"], [[5.0], [5.0]])
        out = apply_normalizer(fit_normalizer(t, "zscore"), t)
        np.testing.assert_array_equal(out.values, [[0.0], [0.0]])

    def test_percentile_rank_convention(self):
        t = ExpressionTable(["a", "b", "c"], ["G"], [[10.0], [20.0], [30.0]])
        out = apply_normalizer(fit_normalizer(t, "percentile"), t)
        np.testing.assert_allclose(out.values[:, 0], [0.0, 0.5, 1.0])

    def test_percentile_new_values_interpolate_and_clamp(self):
        t = ExpressionTable(["a", "b", "c"], ["G"], [[10.0], [20.0], [30.0]])
        norm = fit_normalizer(t, "percentile")
        fresh = ExpressionTable(["x", "y", "z"], ["G"], [[15.0], [5.0], [99.0]])
        out = apply_normalizer(norm, fresh)
        np.testing.assert_allclose(out.values[:, 0], [0.25, 0.0, 1.0])

    def test_zscore_self_normalization_property(self):
        rng = RngStream(3)
        t = ExpressionTable(
            [f"s{i}" for i in range(40)],
            [f"g{j}" for j in range(5)],
            rng.normal(size=(40, 5)) * 3 + 1,
        )
        out = apply_normalizer(fit_normalizer(t, "zscore"), t)
        np.testing.assert_allclose(out.values.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.values.std(axis=0), 1.0, atol=1e-12)

    def test_percentile_outputs_in_unit_interval(self):
        rng = RngStream(4)
        for trial in range(20):
            n = int(rng.integers(2, 30))
            t = ExpressionTable(
                [f"s{i}" for i in range(n)], ["g0", "g1"], rng.normal(size=(n, 2))
            )
            out = apply_normalizer(fit_normalizer(t, "percentile"), t)
            assert out.values.min() >= 0.0 and out.values.max() <= 1.0

    def test_log_offset(self):
        t = ExpressionTable(["a"], ["G"], [[3.0]], Scale("log2", 1.0))
        out = apply_normalizer(fit_normalizer(t, "log_offset", offset=1e-3), t)
        assert abs(out.values[0, 0] - np.log2(7.0 + 1e-3)) < 1e-12
        assert str(out.scale) == "log2+0.001"

    def test_gene_axis_mismatch(self):
        t = ExpressionTable(["a"], ["G1"], [[1.0]])
        other = ExpressionTable(["a"], ["G2"], [[1.0]])
        norm = fit_normalizer(t, "zscore")
        with pytest.raises(DataError):
            apply_normalizer(norm, other)

    def test_unknown_kind(self):
        t = ExpressionTable(["a"], ["G"], [[1.0]])
        with pytest.raises(ConfigError):
            fit_normalizer(t, "minmax")


class TestPerMillion:
    def test_hand_values(self):
        out = per_million(np.array([[1.0, 3.0]]))
        np.testing.assert_array_equal(out, [[250000.0, 750000.0]])

    def test_single_gene(self):
        np.testing.assert_array_equal(per_million(np.array([[7.0]])), [[1e6]])

    def test_scale_invariance(self):
        v = np.array([[2.0, 5.0, 3.0]])
        np.testing.assert_allclose(per_million(v), per_million(7.0 * v), rtol=1e-12)

    def test_zero_row_rejected(self):
        with pytest.raises(DataError):
            per_million(np.array([[0.0, 0.0]]))

    def test_table_conversions_log_output(self):
        t = ExpressionTable(["s"], ["A", "B"], np.log2(np.array([[1.0, 3.0]]) + 1), Scale("log2", 1.0))
        for conv in (fpkm_to_tpm_log, intensity_to_ipm_log):
            out = conv(t)
            np.testing.assert_allclose(
                out.values, np.log2(np.array([[250000.0, 750000.0]]) + 1), rtol=1e-12
            )
            assert str(out.scale) == "log2+1"

    def test_scale_roundtrip_identity(self):
        scale = Scale("log2", 1.0)
        rng = RngStream(5)
        v = np.abs(rng.normal(size=(4, 6))) * 10
        np.testing.assert_allclose(scale.from_linear(scale.to_linear(v)), v, atol=1e-12)


class TestPathwayParsers:
    def test_gmt_line(self, tmp_path):
        p = write(tmp_path / "s.gmt", "PX\turl\tG1\tG2\nPY\turl\tG3\n")
        ps = parse_gmt(p)
        assert ps.pathways == [("PX", ["G1", "G2"]), ("PY", ["G3"])]

    def test_gmt_too_few_fields(self, tmp_path):
        p = write(tmp_path / "s.gmt", "PX\turl\n")
        with pytest.raises(ParseError):
            parse_gmt(p)

    def test_gmt_duplicate_names(self, tmp_path):
        p = write(tmp_path / "s.gmt", "PX\tu\tG1\nPX\tu\tG2\n")
        with pytest.raises(ParseError):
            parse_gmt(p)

    def test_empty_file_gives_empty_set(self, tmp_path):
        p = write(tmp_path / "s.gmt", "")
        ps = parse_gmt(p)
        assert len(ps) == 0

    def test_json_matches_gmt(self, tmp_path):
        gmt = write(tmp_path / "s.gmt", "PX\turl\tG1\tG2\nPY\turl\tG3\n")
        doc = {"PX": {"geneSymbols": ["G1", "G2"]}, "PY": {"geneSymbols": ["G3"]}}
        jsn = write(tmp_path / "s.json", json.dumps(doc))
        assert parse_gmt(gmt).pathways == parse_msigdb_json(jsn).pathways

    def test_json_missing_symbols(self, tmp_path):
        jsn = write(tmp_path / "s.json", json.dumps({"PX": {}}))
        with pytest.raises(ParseError):
            parse_msigdb_json(jsn)


class TestResolvePathways:
    def test_partial_presence(self):
        ps = PathwaySet([("P", ["A", "B", "Z"])])
        masks, report = resolve_pathways(ps, ["A", "B", "C"])
        np.testing.assert_array_equal(masks[0].indices, [0, 1])
        assert report["missing"]["P"] == 1

    def test_full_presence_in_pathway_order(self):
        ps = PathwaySet([("P", ["C", "A"])])
        masks, _ = resolve_pathways(ps, ["A", "B", "C"])
        np.testing.assert_array_equal(masks[0].indices, [2, 0])

    def test_absent_pathway_dropped_with_warning(self):
        ps = PathwaySet([("P1", ["A"]), ("P2", ["ZZ"])])
        masks, report = resolve_pathways(ps, ["A"])
        assert [m.name for m in masks] == ["P1"]
        assert report["dropped"] == ["P2"]

    def test_all_dropped_is_error(self):
        ps = PathwaySet([("P", ["ZZ"])])
        with pytest.raises(ConfigError):
            resolve_pathways(ps, ["A"])


class TestLabelsAndSurvival:
    def test_drop_values(self, tmp_path):
        p = write(
            tmp_path / "l.tsv",
            "sample_id\tsubtype\nS1\tLumA\nS2\tclaudin-low\nS3\tNC\nS4\tBasal\n",
        )
        lt = load_labels(p, "subtype", drop_values={"claudin-low", "NC"})
        assert lt.labels == {"S1": "LumA", "S4": "Basal"}
        assert lt.vocabulary == ["Basal", "LumA"]

    def test_empty_label_dropped(self, tmp_path):
        p = write(tmp_path / "l.tsv", "sample_id\tsubtype\nS1\t\nS2\tLumB\n")
        lt = load_labels(p, "subtype")
        assert list(lt.labels) == ["S2"]

    def test_missing_column_names_available(self, tmp_path):
        p = write(tmp_path / "l.tsv", "sample_id\tother\nS1\tx\n")
        with pytest.raises(ParseError, match="available"):
            load_labels(p, "subtype")

    def test_survival_parse(self, tmp_path):
        p = write(tmp_path / "s.tsv", "sample_id\ttime\tevent\nS1\t120.5\t1\nS2\t300\t0\n")
        st = load_survival(p, "time", "event")
        assert st.records == {"S1": (120.5, True), "S2": (300.0, False)}

    def test_survival_negative_time(self, tmp_path):
        p = write(tmp_path / "s.tsv", "sample_id\ttime\tevent\nS1\t-3\t1\n")
        with pytest.raises(DataError):
            load_survival(p, "time", "event")

    def test_label_table_vocabulary_check(self):
        with pytest.raises(DataError):
            LabelTable({"S1": "A"}, vocabulary=["B"])
