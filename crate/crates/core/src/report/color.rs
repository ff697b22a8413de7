//! Piecewise-linear color ramp for heatmap cells.

/// Maps cosine values in `[-1, 1]` to RGB with anchors at -1, 0, and +1.
///
/// The default runs dark blue -> near-white -> dark red, so lightness is
/// monotone over `[0, 1]` and the extremes are visually saturated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorRamp {
    pub low: [u8; 3],
    pub mid: [u8; 3],
    pub high: [u8; 3],
}

impl Default for ColorRamp {
    fn default() -> Self {
        Self {
            low: [5, 48, 97],
            mid: [247, 247, 247],
            high: [103, 0, 31],
        }
    }
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

impl ColorRamp {
    /// RGB for a value; input is clamped into `[-1, 1]`.
    pub fn rgb(&self, value: f64) -> [u8; 3] {
        let v = value.clamp(-1.0, 1.0);
        let (from, to, t) = if v < 0.0 {
            (self.low, self.mid, v + 1.0)
        } else {
            (self.mid, self.high, v)
        };
        [
            lerp(from[0], to[0], t),
            lerp(from[1], to[1], t),
            lerp(from[2], to[2], t),
        ]
    }

    /// CSS hex form, e.g. `#67001f`.
    pub fn css(&self, value: f64) -> String {
        let [r, g, b] = self.rgb(value);
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    /// Relative luminance (0..1) of the mapped color; used to pick
    /// readable label text colors.
    pub fn luminance(&self, value: f64) -> f64 {
        let [r, g, b] = self.rgb(value);
        (0.2126 * r as f64 + 0.7152 * g as f64 + 0.0722 * b as f64) / 255.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_hit_exactly() {
        let ramp = ColorRamp::default();
        assert_eq!(ramp.rgb(-1.0), ramp.low);
        assert_eq!(ramp.rgb(0.0), ramp.mid);
        assert_eq!(ramp.rgb(1.0), ramp.high);
        assert_eq!(ramp.rgb(2.0), ramp.high);
        assert_eq!(ramp.rgb(-3.0), ramp.low);
    }

    #[test]
    fn lightness_monotone_on_upper_half() {
        let ramp = ColorRamp::default();
        let mut prev = ramp.luminance(0.0);
        for step in 1..=100 {
            let value = step as f64 / 100.0;
            let lum = ramp.luminance(value);
            assert!(lum <= prev + 1e-9, "lightness not monotone at {value}");
            prev = lum;
        }
    }

    #[test]
    fn css_formatting() {
        let ramp = ColorRamp::default();
        assert_eq!(ramp.css(1.0), "#67001f");
        assert_eq!(ramp.css(0.0), "#f7f7f7");
    }
}
