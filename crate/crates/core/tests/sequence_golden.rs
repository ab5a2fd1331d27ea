//! Text form of the reference interferometer sequences against stored copies.

use std::f64::consts::PI;

use berryphase::sequence::{build_interferometer_sequence, Contour, SequenceOptions};
use berryphase::units::mhz_to_angular;

fn render(contour: Contour) -> String {
    build_interferometer_sequence(
        contour,
        PI / 4.0,
        mhz_to_angular(-45.0),
        mhz_to_angular(-423.0),
        100.0,
        &SequenceOptions::default(),
    )
    .unwrap()
    .to_string()
}

#[test]
fn minus_plus_matches_golden() {
    assert_eq!(render(Contour::MinusPlus), include_str!("golden/interferometer_mp.txt"));
}

#[test]
fn plus_plus_matches_golden() {
    assert_eq!(render(Contour::PlusPlus), include_str!("golden/interferometer_pp.txt"));
}
