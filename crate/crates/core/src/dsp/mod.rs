//! MFCC feature chain: pre-emphasis, Hamming framing, radix-2 FFT power
//! spectrum, mel filterbank, log energies and an orthonormal DCT-II.

mod fft;
mod mfcc;

pub use fft::{fft_in_place, power_spectrum, Complex, FftPlan};
pub use mfcc::{
    dct_ii, extract_mfcc, frame_and_window, frame_count, hamming, hz_to_mel, log_mel_energies,
    mel_to_hz, pre_emphasis, resample_linear, FeatureMatrix, MelFilterbank, MfccConfig,
    MfccExtractor, LOG_FLOOR,
};
