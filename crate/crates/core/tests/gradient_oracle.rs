mod common;

use common::gradcheck;

#[test]
fn dense_stacks_match_finite_differences() {
    let (nets, params) = gradcheck::dense_stacks(0x6AD);
    println!("{nets} nets, {params} partial derivatives checked");
    assert!(nets >= 100);
}

#[test]
fn non_probability_layers_under_a_sigmoid_head() {
    assert_eq!(gradcheck::sigmoid_heads(11), 15);
}

#[test]
fn lstm_cell_matches_finite_differences() {
    gradcheck::lstm_cells(5, 6);
}
