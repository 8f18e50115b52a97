export { pgdAttack, maxAbsDelta } from './attack'
export { discoverInputs, extract, EXTRACT_DEFAULTS } from './extract'
export type { ExtractionJob, ExtractResult } from './extract'
export { blobImage, makeSmokeSet, makeTaxonomyFile } from './gen'
export {
  crop,
  expandRoi,
  gaussianBlur,
  readPng,
  resizeBilinear,
  writePng,
} from './image'
export type { Box, RgbImage } from './image'
export { recordToJson, sigmaKey, writeManifest } from './manifest'
export type { ManifestRecord, PrecomputedPreds } from './manifest'
export { Classifier, mulberry32 } from './model'
export type { ModelMeta, Ranked } from './model'
export { DEFAULT_SCORE_THRESHOLD, segment } from './segmenter'
export type { Proposal } from './segmenter'
export { handleRequest, serve, PROTO_VERSION } from './serve'
export { loadTaxonomy, parseTaxonomy, superNameOf } from './taxonomy'
export type { Taxonomy } from './taxonomy'
export { readTotf, writeTotf } from './totf'
export type { FeatureTensor } from './totf'
