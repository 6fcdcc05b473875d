export * from './protocol.js';
export * from './state.js';
export * from './api.js';
export * from './stream.js';
export * from './console.js';
