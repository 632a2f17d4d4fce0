use super::GrayImage;

/// Statistics of one 8-connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub centroid: (f64, f64),
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

#[derive(Debug, Clone)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    /// 0 = background, otherwise `component index + 1`.
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

/// Labels 8-connected regions of nonzero pixels, in raster order of first pixel.
pub fn connected_components(mask: &GrayImage) -> Labeling {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if mask.pixels()[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let (mut area, mut sx, mut sy) = (0usize, 0f64, 0f64);
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            area += 1;
            sx += x as f64;
            sy += y as f64;
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.pixels()[j] != 0 && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        components.push(Component {
            label,
            area,
            centroid: (sx / area as f64, sy / area as f64),
            min_x,
            min_y,
            max_x,
            max_y,
        });
    }
    Labeling {
        width: w,
        height: h,
        labels,
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_diagonal_touching_as_one() {
        let img = GrayImage::from_raw(4, 3, vec![255, 0, 0, 0, 0, 255, 0, 255, 0, 0, 0, 255]).unwrap();
        let l = connected_components(&img);
        assert_eq!(l.components.len(), 2);
        assert_eq!(l.components[0].area, 2);
        assert_eq!(l.components[1].area, 2);
        assert_eq!(l.components[1].centroid, (3.0, 1.5));
    }
}
