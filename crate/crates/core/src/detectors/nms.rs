/// A scored candidate at integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x: usize,
    pub y: usize,
    pub score: f32,
}

/// Square-window non-maximum suppression over sparse candidates.
///
/// A candidate survives when no other candidate within Chebyshev distance `radius`
/// has a higher score; equal scores are resolved in favour of the lower raster index.
/// Output keeps the raster order of the input.
pub fn suppress(width: usize, height: usize, cands: &[Candidate], radius: usize) -> Vec<Candidate> {
    if radius == 0 || cands.is_empty() {
        return cands.to_vec();
    }
    let mut map = vec![f32::NEG_INFINITY; width * height];
    for c in cands {
        map[c.y * width + c.x] = c.score;
    }
    cands
        .iter()
        .filter(|c| {
            let idx = c.y * width + c.x;
            let y0 = c.y.saturating_sub(radius);
            let y1 = (c.y + radius).min(height - 1);
            let x0 = c.x.saturating_sub(radius);
            let x1 = (c.x + radius).min(width - 1);
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let j = yy * width + xx;
                    if j == idx {
                        continue;
                    }
                    let s = map[j];
                    if s > c.score || (s == c.score && j < idx) {
                        return false;
                    }
                }
            }
            true
        })
        .copied()
        .collect()
}
