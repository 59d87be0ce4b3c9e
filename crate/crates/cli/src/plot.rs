//! SVG trajectory plots: polylines colored blue-to-green by step index over
//! an event-density background. Pure string assembly with fixed-precision
//! formatting, so output bytes are a deterministic function of the input.

use std::io::Write;
use std::path::Path;

use evtap_core::EventStream;

use crate::tables::TrackSet;
use crate::FormatError;

/// Density cell size in pixels.
const CELL: u32 = 4;

pub fn render_svg(tracks: &TrackSet, events: &EventStream) -> String {
    let width = events.width();
    let height = events.height();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         width=\"{width}\" height=\"{height}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));

    // Event-density background on a coarse grid.
    let cols = width.div_ceil(CELL);
    let rows = height.div_ceil(CELL);
    let mut counts = vec![0u64; (cols * rows) as usize];
    for ev in events.events() {
        let cx = u32::from(ev.x) / CELL;
        let cy = u32::from(ev.y) / CELL;
        counts[(cy * cols + cx) as usize] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max > 0 {
        svg.push_str("<g fill=\"#303030\">\n");
        for cy in 0..rows {
            for cx in 0..cols {
                let n = counts[(cy * cols + cx) as usize];
                if n == 0 {
                    continue;
                }
                let opacity = 0.08 + 0.72 * (n as f64 / max as f64);
                svg.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" \
                     fill-opacity=\"{:.3}\"/>\n",
                    cx * CELL,
                    cy * CELL,
                    opacity
                ));
            }
        }
        svg.push_str("</g>\n");
    }

    // Per-trajectory gradient from blue (first step) to green (last step).
    svg.push_str("<defs>\n");
    for track in &tracks.points {
        let first = track.coords.first();
        let last = track.coords.last();
        if let (Some(a), Some(b)) = (first, last) {
            svg.push_str(&format!(
                "<linearGradient id=\"traj{}\" gradientUnits=\"userSpaceOnUse\" \
                 x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\">\
                 <stop offset=\"0\" stop-color=\"#1040e0\"/>\
                 <stop offset=\"1\" stop-color=\"#10c040\"/>\
                 </linearGradient>\n",
                track.point_id, a.x, a.y, b.x, b.y
            ));
        }
    }
    svg.push_str("</defs>\n");

    for track in &tracks.points {
        if track.coords.is_empty() {
            continue;
        }
        let points: Vec<String> = track
            .coords
            .iter()
            .map(|c| format!("{:.3},{:.3}", c.x, c.y))
            .collect();
        // A degenerate gradient (start == end) renders as transparent in
        // most viewers; fall back to a solid stroke.
        let start = track.coords.first().unwrap();
        let end = track.coords.last().unwrap();
        let stroke = if (*start - *end).norm() < 1e-9 {
            String::from("#1040e0")
        } else {
            format!("url(#traj{})", track.point_id)
        };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" \
             stroke-width=\"1.2\" stroke-linejoin=\"round\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"1.6\" fill=\"#1040e0\"/>\n",
            start.x, start.y
        ));
        svg.push_str(&format!(
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"1.6\" fill=\"#10c040\"/>\n",
            end.x, end.y
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(tracks: &TrackSet, events: &EventStream, path: &Path) -> Result<(), FormatError> {
    let svg = render_svg(tracks, events);
    crate::atomic_write(path, |file| file.write_all(svg.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::PointTrack;
    use evtap_core::{Event, Polarity, Vec2};

    fn events() -> EventStream {
        EventStream::new(
            64,
            48,
            0,
            vec![
                Event::new(0, 10, 10, Polarity::Pos),
                Event::new(5, 11, 10, Polarity::Neg),
            ],
        )
        .unwrap()
    }

    fn one_track() -> TrackSet {
        TrackSet {
            points: vec![PointTrack {
                point_id: 0,
                times_us: vec![0, 10, 20],
                coords: vec![
                    Vec2::new(10.0, 10.0),
                    Vec2::new(12.0, 11.0),
                    Vec2::new(14.0, 12.0),
                ],
                confidence: vec![1.0; 3],
                status: vec!["ok".into(); 3],
            }],
        }
    }

    #[test]
    fn one_trajectory_yields_one_polyline() {
        let svg = render_svg(&one_track(), &events());
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("linearGradient"));
    }

    #[test]
    fn empty_track_set_is_background_only() {
        let svg = render_svg(&TrackSet::default(), &events());
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.contains("<rect"));
    }

    #[test]
    fn output_is_deterministic() {
        let a = render_svg(&one_track(), &events());
        let b = render_svg(&one_track(), &events());
        assert_eq!(a, b);
    }
}
