//! Each phone estimates its clock offset with a two-way exchange against the
//! server, then timestamps are moved onto the common clock.

use banfusion::timesync::{check_skew, to_common_clock, ClockModel};
use banfusion::Timestamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let true_offsets = [("subject1", 350i64), ("subject2", -1200), ("subject3", 40)];
    let mut models = Vec::new();
    for (device, offset) in true_offsets {
        // device clock = common clock + offset
        let t0 = 1_000_000 + offset;
        let (d_out, d_back) = (rng.random_range(5..80), rng.random_range(5..80));
        let t1 = t0 - offset + d_out;
        let t2 = t1 + 3;
        let t3 = t2 + offset + d_back;
        let model = ClockModel::from_exchange(device, [t0, t1, t2, t3].map(Timestamp)).unwrap();
        println!(
            "{device}: true offset {offset:+} ms, estimated {:+} ms (delays {d_out}/{d_back} ms)",
            model.offset_ms
        );
        models.push(model);
    }

    let report = check_skew(&models).unwrap();
    println!("largest pairwise gap {} ms between {:?}, pass = {}", report.max_gap_ms, report.worst_pair, report.pass);

    let local = Timestamp(5_000_000);
    for m in &models {
        println!("{}: local {} -> common {}", m.device_id, local.millis(), to_common_clock(local, m).unwrap().millis());
    }

    let drifted = ClockModel::new("subject4", 2600);
    println!("offset of 2600 ms accepted: {}", drifted.is_valid());
}
