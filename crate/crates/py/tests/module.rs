use pyo3::ffi::c_str;
use corpusbias::corpusbias as cb_module;
use pyo3::prelude::*;

#[test]
fn module_runs_core_operations() {
    pyo3::append_to_inittab!(cb_module);
    Python::initialize();
    Python::attach(|py| {
        let code = c_str!(
            r#"
import corpusbias as cb
c = cb.Corpus(["He fixed his bike. The cat slept.", "She is an idiot."])
assert len(c) == 3
cda = cb.cda_augment(c)
assert "She fixed her bike." in cda.sentences()
rates, flagged = cb.toxicity_rates(c)
assert flagged.flagged() == [2]
assert len(cb.remove_toxic(flagged)) == 2
lm = cb.NGramScorer(cb.Corpus(["The dog ran. The cat sat."] * 5), order=2, min_count=1)
assert cb.score_minimal_pairs(lm, [("The dog ran.", "Dog the ran.", "order")])["score"] == 100.0
assert abs(cb.pearson([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) < 1e-12
try:
    cb.pearson([1.0], [1.0, 2.0])
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#
        );
        py.run(code, None, None).unwrap();
    });
}
