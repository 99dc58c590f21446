//! Minimal SVG bar chart for score-level histograms.

use sevkit::corpus::Histogram;

const BAR_WIDTH: usize = 56;
const BAR_GAP: usize = 16;
const PLOT_HEIGHT: usize = 280;
const MARGIN_LEFT: usize = 48;
const MARGIN_TOP: usize = 32;
const MARGIN_BOTTOM: usize = 44;

pub fn histogram_svg(histogram: &Histogram) -> String {
    let n = histogram.counts.len();
    let max_count = histogram
        .counts
        .iter()
        .map(|(_, c)| *c)
        .max()
        .unwrap_or(0)
        .max(1);
    let width = MARGIN_LEFT + n * (BAR_WIDTH + BAR_GAP) + BAR_GAP;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;

    let mut svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"13\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n"
        ),
        w = width,
        h = height,
        tx = width / 2,
        title = format!("{}: utterances per score level", histogram.dimension),
    );

    let baseline = MARGIN_TOP + PLOT_HEIGHT;
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{x1}\" y2=\"{y}\" stroke=\"black\"/>\n",
        x0 = MARGIN_LEFT,
        x1 = width - BAR_GAP,
        y = baseline,
    ));

    for (i, (level, count)) in histogram.counts.iter().enumerate() {
        let bar_h = PLOT_HEIGHT * count / max_count;
        let x = MARGIN_LEFT + BAR_GAP + i * (BAR_WIDTH + BAR_GAP);
        let y = baseline - bar_h;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{BAR_WIDTH}\" height=\"{bar_h}\" fill=\"#4878a8\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\">{level}</text>\n",
            cx = x + BAR_WIDTH / 2,
            ly = baseline + 20,
        ));
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"12\">{count}</text>\n",
            cx = x + BAR_WIDTH / 2,
            cy = y.saturating_sub(6).max(MARGIN_TOP),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
