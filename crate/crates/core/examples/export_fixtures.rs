//! Writes the reference problems as CSV files for use with the CLI.
//!
//! cargo run -p construe --example export_fixtures -- crates/core/fixtures

use std::fmt::Write as _;
use std::path::PathBuf;

use construe::ecg::SampleSeries;
use construe::fixtures;
use construe::model::Observation;

fn observations_csv(obs: &[Observation], abstracts: &[(String, Vec<String>)]) -> String {
    let mut out = String::from("id,observable,t_begin,t_end,values,abstracts\n");
    for o in obs {
        let values: Vec<String> = o.values.iter().map(|(a, v)| format!("{a}={v}")).collect();
        let abstracts = abstracts
            .iter()
            .find(|(id, _)| *id == o.id)
            .map(|(_, a)| a.join(";"))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            o.id,
            o.observable,
            o.t_begin,
            o.t_end,
            values.join(";"),
            abstracts
        )
        .unwrap();
    }
    out
}

fn series_csv(s: &SampleSeries) -> String {
    let mut out = String::from("t,v\n");
    for (t, v) in s.t.iter().zip(&s.v) {
        writeln!(out, "{t},{v}").unwrap();
    }
    out
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let problems = [
        ("sinus", fixtures::sinus()),
        ("worked_example", fixtures::worked_example()),
        ("bigeminy", fixtures::bigeminy()),
        ("nine_beats", fixtures::nine_beats()),
        ("ignorance", fixtures::ignorance()),
        ("missing_beat", fixtures::missing_beat()),
    ];
    let (_, worked_abstracts) = fixtures::worked_example_observations();
    for (name, p) in &problems {
        let abstracts = if *name == "worked_example" {
            &worked_abstracts[..]
        } else {
            &[]
        };
        std::fs::write(
            dir.join(format!("{name}.csv")),
            observations_csv(&p.observations, abstracts),
        )?;
        if let Some(s) = &p.series {
            std::fs::write(dir.join(format!("{name}_series.csv")), series_csv(s))?;
        }
    }
    Ok(())
}
