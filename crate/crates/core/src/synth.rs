//! Synthetic stand-in for recorded gesture windows.
//!
//! Each gesture is a raised-cosine bump template on one or two sensor
//! channels. A [`UserProfile`] warps the templates (per-channel amplitude,
//! circular time shift, width scaling, crosstalk into neighbouring
//! channels) and adds Gaussian noise. Base users draw their profiles from a
//! narrow range around the identity warp; the held-out "new user" is drawn
//! from the same ranges widened by `new_user_shift_multiplier` and pushed
//! to their outer edge, which is what produces the generalization gap.
//!
//! All randomness comes from ChaCha streams keyed by `(seed, user, index)`,
//! so any user's samples can be regenerated independently of the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, GestureLabel, GestureSample, Signal, CHANNELS, WINDOW};

const BASELINE: f64 = 0.1;
const HEIGHT: f64 = 0.8;

const MAX_JITTER: f64 = 3.0;
/// Height range of the random bumps making up a `None` window.
const NONE_HEIGHT: (f64, f64) = (0.03, 0.12);

/// A raised-cosine bump `(channel, centre frame, width in frames)`.
#[derive(Debug, Clone, Copy)]
struct Bump {
    channel: usize,
    center: f64,
    width: f64,
    height: f64,
}

impl Bump {
    const fn full(channel: usize, center: f64, width: f64) -> Self {
        Bump {
            channel,
            center,
            width,
            height: 1.0,
        }
    }

    fn at(&self, t: f64, width_scale: f64) -> f64 {
        let w = self.width * width_scale;
        let d = t - self.center;
        if d.abs() >= w / 2.0 {
            0.0
        } else {
            0.5 * (1.0 + (2.0 * std::f64::consts::PI * d / w).cos())
        }
    }
}

fn template(label: GestureLabel) -> Result<&'static [Bump]> {
    const INDEX_BEND: [Bump; 1] = [Bump::full(1, 10.0, 16.0)];
    // thumb rises first, index follows
    const SHOOT: [Bump; 2] = [Bump::full(0, 6.0, 10.0), Bump::full(1, 14.0, 10.0)];
    const FLICK_INDEX: [Bump; 1] = [Bump::full(1, 10.0, 6.0)];
    const FLICK_MIDDLE: [Bump; 1] = [Bump::full(2, 10.0, 6.0)];
    match label {
        GestureLabel::IndexBend => Ok(&INDEX_BEND),
        GestureLabel::Shoot => Ok(&SHOOT),
        GestureLabel::FlickIndex => Ok(&FLICK_INDEX),
        GestureLabel::FlickMiddle => Ok(&FLICK_MIDDLE),
        GestureLabel::None => Err(Error::Contract("the none gesture has no prototype".into())),
    }
}

/// How one user's hand deforms the gesture templates.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: u32,
    /// Per-channel gain on the bump height, in `[0.6, 1.4]`.
    pub amplitude_scale: [f64; CHANNELS],
    /// Circular shift in frames, in `[-3, 3]`.
    pub time_shift: i32,
    /// Bump width multiplier, in `[0.7, 1.3]`.
    pub width_scale: f64,
    /// Additive Gaussian noise, in `[0.01, 0.08]`.
    pub noise_sigma: f64,
    /// Fraction of an active channel leaking into its neighbours, in `[0, 0.15]`.
    pub crosstalk: f64,
    /// Repetition-to-repetition variation: each window's bumps move by
    /// `N(0, jitter)` frames and scale in height by `1 + N(0, jitter/8)`.
    /// Zero reproduces the warped template plus noise exactly.
    pub jitter: f64,
}

impl UserProfile {
    /// The identity warp with the given noise level.
    pub fn identity(user_id: u32, noise_sigma: f64) -> Self {
        Self {
            user_id,
            amplitude_scale: [1.0; CHANNELS],
            time_shift: 0,
            width_scale: 1.0,
            noise_sigma,
            crosstalk: 0.0,
            jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude_scale.iter().all(|a| (0.6..=1.4).contains(a))
            && (-3..=3).contains(&self.time_shift)
            && (0.7..=1.3).contains(&self.width_scale)
            && (0.0..=0.08).contains(&self.noise_sigma)
            && (0.0..=0.15).contains(&self.crosstalk)
            && (0.0..=MAX_JITTER).contains(&self.jitter);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("user profile out of range: {self:?}")))
        }
    }
}

impl Default for UserProfile {
    fn default() -> Self {
        Self::identity(0, 0.03)
    }
}

/// How far base users stray from the identity warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpread {
    /// Half-width of the per-channel amplitude gain around 1.
    pub amplitude: f64,
    /// Largest circular shift in frames.
    pub shift: f64,
    /// Half-width of the width multiplier around 1.
    pub width: f64,
    pub crosstalk_max: f64,
    pub noise_min: f64,
    pub noise_max: f64,
    /// Per-repetition jitter given to every user.
    pub jitter: f64,
}

impl Default for ProfileSpread {
    fn default() -> Self {
        Self {
            amplitude: 0.3,
            shift: 0.9,
            width: 0.2,
            crosstalk_max: 0.08,
            noise_min: 0.01,
            noise_max: 0.03,
            jitter: 0.3,
        }
    }
}

impl ProfileSpread {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=0.4).contains(&self.amplitude)
            && (0.0..=3.0).contains(&self.shift)
            && (0.0..=0.3).contains(&self.width)
            && (0.0..=0.15).contains(&self.crosstalk_max)
            && 0.0 <= self.noise_min
            && self.noise_min <= self.noise_max
            && self.noise_max <= 0.08
            && (0.0..=MAX_JITTER).contains(&self.jitter);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("profile spread outside the user-profile ranges: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Number of base users (the new user comes on top).
    pub users: usize,
    pub samples_per_gesture_per_user: usize,
    pub rng_seed: u64,
    pub new_user_shift_multiplier: f64,
    pub spread: ProfileSpread,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 11,
            samples_per_gesture_per_user: 100,
            rng_seed: 20240512,
            new_user_shift_multiplier: 1.5,
            spread: ProfileSpread::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users < 4 {
            return Err(Error::Config(format!("need at least 4 base users, got {}", self.users)));
        }
        if self.samples_per_gesture_per_user < 2 {
            return Err(Error::Config("need at least 2 samples per gesture per user".into()));
        }
        if !(self.new_user_shift_multiplier >= 1.0 && self.new_user_shift_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "new-user shift multiplier must be >= 1, got {}",
                self.new_user_shift_multiplier
            )));
        }
        self.spread.validate()
    }
}

/// Noise-free template of a gesture.
pub fn gesture_prototype(label: GestureLabel) -> Result<Signal> {
    Ok(render(template(label)?, &UserProfile::identity(0, 0.0)))
}

/// Template after applying a profile's deterministic warp (no noise).
pub fn warped_prototype(label: GestureLabel, profile: &UserProfile) -> Result<Signal> {
    let mut s = render(template(label)?, profile);
    clamp(&mut s);
    Ok(s)
}

fn render(bumps: &[Bump], profile: &UserProfile) -> Signal {
    let mut s = [[BASELINE; WINDOW]; CHANNELS];
    for t in 0..WINDOW {
        let src = (t as i32 - profile.time_shift).rem_euclid(WINDOW as i32) as f64;
        for b in bumps {
            let v = HEIGHT * profile.amplitude_scale[b.channel] * b.height * b.at(src, profile.width_scale);
            s[b.channel][t] += v;
            if b.channel > 0 {
                s[b.channel - 1][t] += profile.crosstalk * v;
            }
            if b.channel + 1 < CHANNELS {
                s[b.channel + 1][t] += profile.crosstalk * v;
            }
        }
    }
    s
}

fn clamp(s: &mut Signal) {
    s.iter_mut().flatten().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// One noisy window from `profile`.
///
/// The `None` gesture is built from one to three low random bumps on random
/// channels, so it overlaps the real gestures without following any of them.
pub fn sample_user(profile: &UserProfile, label: GestureLabel, rng: &mut impl Rng) -> GestureSample {
    let mut signal = if label == GestureLabel::None {
        let count = rng.random_range(1..=3);
        let bumps: Vec<Bump> = (0..count)
            .map(|_| Bump {
                channel: rng.random_range(0..CHANNELS),
                center: rng.random_range(0.0..WINDOW as f64),
                width: rng.random_range(4.0..16.0),
                height: rng.random_range(NONE_HEIGHT.0..NONE_HEIGHT.1),
            })
            .collect();
        render(&bumps, profile)
    } else {
        let bumps = template(label).expect("labelled gesture");
        if profile.jitter > 0.0 {
            let jittered: Vec<Bump> = bumps
                .iter()
                .map(|b| {
                    let dt: f64 = rng.sample(StandardNormal);
                    let da: f64 = rng.sample(StandardNormal);
                    Bump {
                        center: b.center + profile.jitter * dt,
                        height: b.height * (1.0 + profile.jitter / 8.0 * da),
                        ..*b
                    }
                })
                .collect();
            render(&jittered, profile)
        } else {
            render(bumps, profile)
        }
    };
    for v in signal.iter_mut().flatten() {
        let z: f64 = rng.sample(StandardNormal);
        *v += profile.noise_sigma * z;
    }
    clamp(&mut signal);
    GestureSample::new(signal, label, profile.user_id).expect("clamped signal")
}

/// The four splits produced by [`generate`].
#[derive(Debug, Clone)]
pub struct SynthSplits {
    pub base_train: Dataset,
    pub base_test: Dataset,
    pub new_user_train: Dataset,
    pub new_user_test: Dataset,
}

const PROFILE_STREAM: u64 = u64::MAX;
const SPLIT_STREAM: u64 = u64::MAX - 1;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, user, index)`.
pub fn keyed_rng(seed: u64, user: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ user) ^ index))
}

/// Profile of a base user: a small random warp around the identity.
pub fn base_profile(seed: u64, user_id: u32, spread: &ProfileSpread) -> UserProfile {
    let mut rng = keyed_rng(seed, user_id as u64, PROFILE_STREAM);
    let mut amplitude_scale = [1.0; CHANNELS];
    for a in &mut amplitude_scale {
        *a = 1.0 + rng.random_range(-spread.amplitude..=spread.amplitude);
    }
    let max_shift = spread.shift.floor() as i32;
    UserProfile {
        user_id,
        amplitude_scale,
        time_shift: rng.random_range(-max_shift..=max_shift),
        width_scale: 1.0 + rng.random_range(-spread.width..=spread.width),
        noise_sigma: rng.random_range(spread.noise_min..=spread.noise_max),
        crosstalk: rng.random_range(0.0..=spread.crosstalk_max),
        jitter: spread.jitter,
    }
}

/// Profile of the held-out user: every warp parameter sits in the outer
/// quarter of the base range widened by `multiplier`.
pub fn new_user_profile(seed: u64, user_id: u32, multiplier: f64, spread: &ProfileSpread) -> UserProfile {
    let mut rng = keyed_rng(seed, user_id as u64, PROFILE_STREAM);
    let mut edge = |spread: f64| {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        sign * multiplier * spread * rng.random_range(0.75..=1.0)
    };
    let mut amplitude_scale = [1.0; CHANNELS];
    for a in &mut amplitude_scale {
        *a = (1.0 + edge(spread.amplitude)).clamp(0.6, 1.4);
    }
    let shift = edge(spread.shift);
    let time_shift = ((shift.abs().ceil()).copysign(shift) as i32).clamp(-3, 3);
    let width_scale = (1.0 + edge(spread.width)).clamp(0.7, 1.3);
    let crosstalk = (multiplier * spread.crosstalk_max * rng.random_range(0.75..=1.0)).min(0.15);
    let noise_sigma = rng.random_range(spread.noise_min..=spread.noise_max);
    UserProfile {
        user_id,
        amplitude_scale,
        time_shift,
        width_scale,
        noise_sigma,
        crosstalk,
        jitter: spread.jitter,
    }
}

fn user_samples(seed: u64, profile: &UserProfile, per_gesture: usize) -> Vec<GestureSample> {
    let mut out = Vec::with_capacity(per_gesture * GestureLabel::ALL.len());
    for label in GestureLabel::ALL {
        for i in 0..per_gesture {
            let index = (label.index() * per_gesture + i) as u64;
            let mut rng = keyed_rng(seed, profile.user_id as u64, index);
            out.push(sample_user(profile, label, &mut rng));
        }
    }
    out
}

/// Number of base users assigned to training under the 8:3 user split.
pub fn train_user_count(users: usize) -> usize {
    ((users as f64 * 8.0 / 11.0).round() as usize).clamp(1, users - 1)
}

/// Generates base train/test splits (by user groups, 8:3) and a 50/50
/// split of one extra, strongly shifted user.
pub fn generate(config: &SynthConfig) -> Result<SynthSplits> {
    config.validate()?;
    let seed = config.rng_seed;
    let per = config.samples_per_gesture_per_user;

    let mut order: Vec<u32> = (0..config.users as u32).collect();
    let mut split_rng = keyed_rng(seed, SPLIT_STREAM, 0);
    for i in (1..order.len()).rev() {
        order.swap(i, split_rng.random_range(0..=i));
    }
    let mut train_users = order[..train_user_count(config.users)].to_vec();
    train_users.sort_unstable();

    let mut base_train = Vec::new();
    let mut base_test = Vec::new();
    for uid in 0..config.users as u32 {
        let profile = base_profile(seed, uid, &config.spread);
        let samples = user_samples(seed, &profile, per);
        if train_users.contains(&uid) {
            base_train.extend(samples);
        } else {
            base_test.extend(samples);
        }
    }

    let new_id = config.users as u32;
    let profile = new_user_profile(seed, new_id, config.new_user_shift_multiplier, &config.spread);
    let half = per.div_ceil(2);
    let (mut nu_train, mut nu_test) = (Vec::new(), Vec::new());
    for (i, s) in user_samples(seed, &profile, per).into_iter().enumerate() {
        if i % per < half {
            nu_train.push(s);
        } else {
            nu_test.push(s);
        }
    }
    log::debug!("new user profile: {profile:?}");

    Ok(SynthSplits {
        base_train: Dataset::new(base_train),
        base_test: Dataset::new(base_test),
        new_user_train: Dataset::new(nu_train),
        new_user_test: Dataset::new(nu_test),
    })
}
