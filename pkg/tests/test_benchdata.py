import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from targeted_design.benchdata import (
    BUILTIN_SCHEMAS,
    ColumnSchema,
    CounterfactualTable,
    estimate_noise_precision,
    load_table,
    observe_factual,
    resolve_schema,
    true_ate,
    write_table,
)
from targeted_design.errors import (
    BookkeepingError,
    EstimationError,
    ParameterError,
    ParseError,
    SchemaError,
)

FIXTURE = "data/fixture_counterfactual.csv"


def small_table():
    return CounterfactualTable(
        t_factual=np.array([1, 0, 1]),
        y_factual=np.array([3.0, 1.0, 2.5]),
        y_counterfactual=np.array([1.0, 3.5, 0.5]),
        X=np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]),
    )


class TestFixtureFile:
    def test_parses_and_matches_known_effect(self):
        table = load_table(FIXTURE, schema="basic")
        assert table.n == 5
        assert table.d == 2
        assert true_ate(table) == 2.0  # effects 2, 3, 1, 2.5, 1.5 average exactly

    def test_row_level_contents(self):
        table = load_table(FIXTURE, schema="basic")
        assert set(np.unique(table.t_factual)) <= {0, 1}
        # factual arm returns the factual column verbatim
        for i in range(table.n):
            assert observe_factual(table, i, float(table.t_factual[i])) == table.y_factual[i]
            other = 1.0 - float(table.t_factual[i])
            assert observe_factual(table, i, other) == table.y_counterfactual[i]


class TestRoundTrip:
    def test_write_then_load_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(1)
        table = CounterfactualTable(
            rng.integers(2, size=20),
            rng.standard_normal(20) * 1e3,
            rng.standard_normal(20) * 1e-3,
            rng.standard_normal((20, 4)),
        )
        path = str(tmp_path / "t.csv")
        write_table(table, path)
        back = load_table(path, schema="basic")
        np.testing.assert_array_equal(back.t_factual, table.t_factual)
        np.testing.assert_array_equal(back.y_factual, table.y_factual)
        np.testing.assert_array_equal(back.y_counterfactual, table.y_counterfactual)
        np.testing.assert_array_equal(back.X, table.X)

    def test_true_ate_row_order_invariant(self):
        table = small_table()
        perm = [2, 0, 1]
        shuffled = CounterfactualTable(
            table.t_factual[perm], table.y_factual[perm],
            table.y_counterfactual[perm], table.X[perm],
        )
        assert true_ate(shuffled) == pytest.approx(true_ate(table), rel=1e-15)


class TestSchemas:
    def test_builtin_names(self):
        assert resolve_schema("basic") is BUILTIN_SCHEMAS["basic"]
        assert resolve_schema("ihdp") is BUILTIN_SCHEMAS["ihdp"]
        with pytest.raises(SchemaError):
            resolve_schema("unknown-layout")

    def test_mapping_schema(self):
        schema = resolve_schema(
            {"treatment": 0, "y_factual": 1, "y_counterfactual": 2, "header": False}
        )
        assert isinstance(schema, ColumnSchema)
        assert schema.covariates == "rest"
        assert schema.header is False

    def test_headerless_positional_layout(self, tmp_path):
        # mimic the common public benchmark layout: treatment, two observed
        # outcomes, two noiseless columns to ignore, then 25 covariates
        rng = np.random.default_rng(4)
        rows = []
        for i in range(6):
            t = i % 2
            rows.append(
                [t, 1.0 + t, 1.0 + (1 - t), -99.0, -99.0, *rng.standard_normal(25)]
            )
        path = tmp_path / "positional.csv"
        path.write_text(
            "\n".join(",".join(f"{v:.17g}" for v in row) for row in rows) + "\n"
        )
        table = load_table(str(path), schema="ihdp")
        assert table.n == 6
        assert table.d == 25
        assert true_ate(table) == pytest.approx(1.0)
        # the sentinel ignored columns never leak into the covariates
        assert not np.any(table.X == -99.0)

    def test_named_column_missing(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("treatment,y_factual,x0\n1,2.0,0.1\n")
        with pytest.raises(SchemaError):
            load_table(str(path), schema="basic")

    def test_positional_column_out_of_range(self, tmp_path):
        path = tmp_path / "narrow.csv"
        path.write_text("1,2.0,3.0\n")  # ihdp schema needs 30 columns
        with pytest.raises(SchemaError):
            load_table(str(path), schema="ihdp")

    def test_schema_leaving_no_covariates(self, tmp_path):
        path = tmp_path / "nocov.csv"
        path.write_text("treatment,y_factual,y_counterfactual\n1,2.0,1.0\n")
        with pytest.raises(SchemaError):
            load_table(str(path), schema="basic")


class TestParseErrors:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            load_table(str(path), schema="basic")

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("treatment,y_factual,y_counterfactual,x0\n")
        with pytest.raises(SchemaError):
            load_table(str(path), schema="basic")

    def test_non_numeric_cell_names_line(self, tmp_path):
        path = tmp_path / "text.csv"
        path.write_text(
            "treatment,y_factual,y_counterfactual,x0\n"
            "1,2.0,1.0,0.5\n"
            "0,oops,1.0,0.5\n"
        )
        with pytest.raises(ParseError, match=r"line 3"):
            load_table(str(path), schema="basic")

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text(
            "treatment,y_factual,y_counterfactual,x0\n"
            "1,2.0,1.0,0.5\n"
            "0,2.0,1.0\n"
        )
        with pytest.raises(ParseError, match=r"line 3"):
            load_table(str(path), schema="basic")

    def test_nonbinary_treatment_rejected(self, tmp_path):
        path = tmp_path / "t2.csv"
        path.write_text("treatment,y_factual,y_counterfactual,x0\n2,2.0,1.0,0.5\n")
        with pytest.raises(ParseError, match="treatment"):
            load_table(str(path), schema="basic")

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "blank.csv"
        path.write_text(
            "treatment,y_factual,y_counterfactual,x0\n\n1,2.0,1.0,0.5\n\n0,1.0,2.0,0.3\n"
        )
        assert load_table(str(path), schema="basic").n == 2


class TestTableOps:
    def test_observe_factual_bounds(self):
        table = small_table()
        with pytest.raises(BookkeepingError):
            observe_factual(table, 3, 1.0)
        with pytest.raises(ParameterError):
            observe_factual(table, 0, 0.5)

    def test_true_ate_empty(self):
        empty = CounterfactualTable(
            np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), np.zeros((0, 2))
        )
        with pytest.raises(EstimationError):
            true_ate(empty)

    def test_mismatched_columns_rejected(self):
        with pytest.raises(ParameterError):
            CounterfactualTable(np.array([1]), np.zeros(2), np.zeros(2), np.zeros((2, 1)))

    def test_nonbinary_factual_arm_rejected(self):
        with pytest.raises(ParameterError):
            CounterfactualTable(np.array([2]), np.zeros(1), np.zeros(1), np.zeros((1, 1)))


class TestNoisePrecision:
    def test_two_point_example(self):
        # sample variance of (0, 2) with ddof=1 is 2, precision 1/2
        assert estimate_noise_precision(np.array([0.0, 2.0])) == pytest.approx(0.5)

    def test_known_variance(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])  # var ddof=1 = 5/3
        assert estimate_noise_precision(y) == pytest.approx(0.6)

    def test_degenerate_inputs(self):
        with pytest.raises(EstimationError):
            estimate_noise_precision(np.array([1.0]))
        with pytest.raises(EstimationError):
            estimate_noise_precision(np.array([3.0, 3.0, 3.0]))

    @settings(deadline=None, max_examples=50)
    @given(
        st.lists(st.floats(-100, 100), min_size=3, max_size=30).filter(
            lambda ys: max(ys) - min(ys) > 1e-6
        ),
        st.floats(0.01, 100.0),
    )
    def test_scaling_property(self, ys, scale):
        # precision of a*y is precision of y divided by a^2
        y = np.array(ys)
        base = estimate_noise_precision(y)
        scaled = estimate_noise_precision(scale * y)
        assert scaled == pytest.approx(base / scale**2, rel=1e-9)
