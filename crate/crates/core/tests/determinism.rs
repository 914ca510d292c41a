use hadamard_flow::harness::config::bundled;
use hadamard_flow::harness::Pipeline;
use hadamard_flow::parallel::{set_execution, Execution};
use hadamard_flow::regularization::Level;

#[test]
fn sequential_and_parallel_runs_agree_bitwise() {
    let mut scenario = bundled("flrw_kg").unwrap();
    scenario.transport.nodes = 9;
    scenario.cone.directions = 8;
    scenario.cone.t_nodes = 12;

    let tables = |mode| {
        set_execution(mode);
        let p = Pipeline::solved(&scenario).unwrap();
        let b = &p.bases[0];
        let coeff: Vec<String> = b.transport.tables().iter().map(|t| t.to_csv()).collect();
        let cone = b.cone().unwrap();
        let f: Vec<String> = [Level::Bracket(0), Level::Brace(1)]
            .iter()
            .map(|&l| cone.table(l).unwrap().to_csv())
            .collect();
        (coeff, f)
    };
    let seq = tables(Execution::Sequential);
    let par = tables(Execution::Parallel);
    set_execution(Execution::Parallel);
    assert_eq!(seq, par);
    assert_eq!(par, tables(Execution::Parallel));
}
