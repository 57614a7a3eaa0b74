//! 32x32 RGB rasterizer. Blocks are drawn as shape glyphs in their color on
//! the scene background, peg on top as a light disc. Pure integer/float
//! comparisons only, so identical states always produce identical pixels.

use super::{BlockShape, Vec2, WorldState};

pub const RENDER_SIZE: usize = 32;

/// How much larger glyphs draw than their collision radius; purely visual
/// so the four shapes raster to distinct pixel patterns at 32x32.
const DRAW_SCALE: f32 = 2.2;
const PEG_DRAW_SCALE: f32 = 2.0;
const PEG_COLOR: [u8; 3] = [232, 232, 232];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// RGB, row-major, y = 0 at the top.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Image {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Image { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Normalize to f32 in [0,1], channel-interleaved row-major.
    pub fn to_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32 / 255.0).collect()
    }

    /// Binary PPM (P6), handy for eyeballing scenes from the examples.
    pub fn write_ppm(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        write!(f, "P6\n{} {}\n255\n", self.width, self.height)?;
        f.write_all(&self.pixels)
    }
}

fn glyph_contains(shape: BlockShape, dx: f32, dy: f32, s: f32) -> bool {
    match shape {
        BlockShape::Cube => dx.abs() <= s * 0.92 && dy.abs() <= s * 0.92,
        BlockShape::Pentagon => dx.abs() + dy.abs() <= s * 1.25,
        BlockShape::Star => {
            (dx.abs() <= s * 0.42 && dy.abs() <= s * 1.2)
                || (dy.abs() <= s * 0.42 && dx.abs() <= s * 1.2)
        }
        BlockShape::Moon => {
            let bite_dx = dx - 0.62 * s;
            dx * dx + dy * dy <= s * s && bite_dx * bite_dx + dy * dy > (0.58 * s) * (0.58 * s)
        }
    }
}

pub fn render(state: &WorldState) -> Image {
    let w = RENDER_SIZE;
    let mut img = Image::filled(w, w, state.background);
    for py in 0..w {
        for px in 0..w {
            let p = Vec2::new((px as f32 + 0.5) / w as f32, (py as f32 + 0.5) / w as f32);
            let mut color: Option<[u8; 3]> = None;
            for b in &state.blocks {
                let s = b.radius * DRAW_SCALE;
                if glyph_contains(b.shape, p.x - b.pos.x, p.y - b.pos.y, s) {
                    color = Some(b.color.rgb());
                }
            }
            let pr = state.peg_radius * PEG_DRAW_SCALE;
            let (dx, dy) = (p.x - state.peg_pos.x, p.y - state.peg_pos.y);
            if dx * dx + dy * dy <= pr * pr {
                color = Some(PEG_COLOR);
            }
            if let Some(c) = color {
                img.set(px, py, c);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockworld::{Block, Color, WorldState};

    fn empty_state() -> WorldState {
        WorldState {
            peg_pos: Vec2::new(-10.0, -10.0), // off-board so nothing draws
            peg_radius: 0.025,
            blocks: vec![],
            background: [10, 20, 30],
            step_count: 0,
            rng_state: 0,
        }
    }

    #[test]
    fn empty_scene_is_all_background() {
        let img = render(&empty_state());
        for y in 0..img.height {
            for x in 0..img.width {
                assert_eq!(img.get(x, y), [10, 20, 30]);
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut s = empty_state();
        s.peg_pos = Vec2::new(0.4, 0.6);
        s.blocks.push(Block {
            pos: Vec2::new(0.7, 0.3),
            radius: 0.035,
            color: Color::Red,
            shape: BlockShape::Star,
        });
        assert_eq!(render(&s), render(&s));
    }

    #[test]
    fn corner_block_confined_to_top_left_quadrant() {
        // Pixel-scan oracle: every non-background pixel must be in x,y < 16.
        let mut s = empty_state();
        s.blocks.push(Block {
            pos: Vec2::new(0.0, 0.0),
            radius: 0.035,
            color: Color::Blue,
            shape: BlockShape::Cube,
        });
        let img = render(&s);
        let mut found = 0;
        for y in 0..img.height {
            for x in 0..img.width {
                if img.get(x, y) != [10, 20, 30] {
                    assert!(x < 16 && y < 16, "pixel ({x},{y}) outside top-left quadrant");
                    found += 1;
                }
            }
        }
        assert!(found > 0, "block should draw at least one pixel");
    }

    #[test]
    fn all_shapes_draw_distinct_patterns() {
        let base = empty_state();
        let mut renders = Vec::new();
        for shape in BlockShape::ALL {
            let mut s = base.clone();
            s.blocks.push(Block {
                pos: Vec2::new(0.5, 0.5),
                radius: 0.035,
                color: Color::Yellow,
                shape,
            });
            renders.push(render(&s));
        }
        for i in 0..renders.len() {
            for j in (i + 1)..renders.len() {
                assert_ne!(renders[i].pixels, renders[j].pixels, "shapes {i} and {j} identical");
            }
        }
    }

    #[test]
    fn background_change_only_affects_background_pixels() {
        let mut s = empty_state();
        s.peg_pos = Vec2::new(0.5, 0.5);
        let a = render(&s);
        s.background = [200, 100, 50];
        let b = render(&s);
        let mut changed = 0;
        let mut same_fg = 0;
        for y in 0..a.height {
            for x in 0..a.width {
                if a.get(x, y) == PEG_COLOR {
                    assert_eq!(b.get(x, y), PEG_COLOR);
                    same_fg += 1;
                } else {
                    assert_eq!(b.get(x, y), [200, 100, 50]);
                    changed += 1;
                }
            }
        }
        assert!(same_fg > 0 && changed > 0);
    }
}
