//! Reference shortest paths for grid search checks.

/// Plain O(n²) Dijkstra with its own move rules: 8 neighbours, diagonals only when
/// both orthogonal cells beside them are free.
pub fn dijkstra(free: &[bool], w: usize, h: usize, start: usize, goal: usize) -> Option<f64> {
    let n = w * h;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[start] = 0.0;
    let is_free =
        |c: i64, r: i64| c >= 0 && r >= 0 && (c as usize) < w && (r as usize) < h && free[r as usize * w + c as usize];
    loop {
        let u = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
        if u == goal {
            return Some(dist[u]);
        }
        done[u] = true;
        let (c, r) = ((u % w) as i64, (u / w) as i64);
        for dc in -1..=1i64 {
            for dr in -1..=1i64 {
                if (dc, dr) == (0, 0) || !is_free(c + dc, r + dr) {
                    continue;
                }
                let cost = if dc != 0 && dr != 0 {
                    if !is_free(c + dc, r) || !is_free(c, r + dr) {
                        continue;
                    }
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                let v = (r + dr) as usize * w + (c + dc) as usize;
                dist[v] = dist[v].min(dist[u] + cost);
            }
        }
    }
}
